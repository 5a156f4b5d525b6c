//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator built by
//! [`stream`]. Independent sub-streams (per trial, per repetition, per
//! purpose) get their seeds from [`derive_seed`], so a single master seed
//! fixes a whole experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn stream(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Mixes a master seed with a path of labels into a new seed (splitmix64 finalizer per step).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix(master ^ 0x6b65_7866_616d_0001);
    for &p in path {
        state = mix(state ^ mix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
