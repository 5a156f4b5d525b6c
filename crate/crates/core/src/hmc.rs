//! Surrogate HMC: leapfrog trajectories driven by a (learned) score, judged
//! by the Metropolis acceptance they would have under the true target.
//!
//! Dynamics use `H(x, p) = U(x) + |p|^2/2` with `grad U = -score`, so a
//! perfect score gives the usual HMC integrator. Acceptance at step `t` is
//! `min(1, exp(H(x_0, p_0) - H(x_t, p_t)))` with the *true* potential
//! `U = -log pi` at both endpoints.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::ScoreFunction;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub num_steps: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl HmcConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            num_steps: 100,
            step_size: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_size > 0.0 && self.step_size.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("step_size must be positive and finite"))
        }
    }
}

/// Leapfrog states `(x_t, p_t)` for `t = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vec<f64>>,
    pub momenta: Vec<Vec<f64>>,
    /// Set when the score became non-finite; the trajectory stops at the last
    /// finite state and this holds the step that failed.
    pub truncated_at: Option<usize>,
}

impl Trajectory {
    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }
}

/// Standard normal initial momentum for `seed`.
pub fn initial_momentum(dim: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut r)).collect()
}

fn finite_score(score: &dyn ScoreFunction, x: &[f64]) -> Option<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    match score.score(x) {
        Ok(g) if g.len() == x.len() && g.iter().all(|v| v.is_finite()) => Some(g),
        _ => None,
    }
}

/// Leapfrog integration from `(x0, p0)`:
/// `p += eps/2 s(x); x += eps p; p += eps/2 s(x)`.
pub fn leapfrog(
    score: &dyn ScoreFunction,
    x0: &[f64],
    p0: &[f64],
    num_steps: usize,
    step_size: f64,
) -> Result<Trajectory> {
    Error::check_dim(x0.len(), p0.len())?;
    let mut traj = Trajectory {
        positions: vec![x0.to_vec()],
        momenta: vec![p0.to_vec()],
        truncated_at: None,
    };
    let Some(mut g) = finite_score(score, x0) else {
        traj.truncated_at = Some(0);
        return Ok(traj);
    };
    let mut x = x0.to_vec();
    let mut p = p0.to_vec();
    let half = 0.5 * step_size;
    for step in 1..=num_steps {
        for i in 0..x.len() {
            p[i] += half * g[i];
            x[i] += step_size * p[i];
        }
        match finite_score(score, &x) {
            Some(next) => g = next,
            None => {
                traj.truncated_at = Some(step);
                break;
            }
        }
        for i in 0..x.len() {
            p[i] += half * g[i];
        }
        traj.positions.push(x.clone());
        traj.momenta.push(p.clone());
    }
    Ok(traj)
}

/// Leapfrog trajectory from `x0` with momentum drawn from `N(0, I)` using `config.seed`.
pub fn surrogate_trajectory(
    score: &dyn ScoreFunction,
    x0: &[f64],
    config: &HmcConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let p0 = initial_momentum(x0.len(), config.seed);
    leapfrog(score, x0, &p0, config.num_steps, config.step_size)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub states: Vec<Vec<f64>>,
    /// Acceptance for steps `1..=num_steps`; steps lost to truncation count as 0.
    pub per_step_acceptance: Vec<f64>,
    /// Mean of `per_step_acceptance`, or 1 when `num_steps = 0`.
    pub mean_acceptance: f64,
    pub truncated_at: Option<usize>,
}

fn hamiltonian(target_logp: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], p: &[f64]) -> Result<f64> {
    let logp = target_logp(x)?;
    if !logp.is_finite() {
        return Err(Error::invalid(format!(
            "target log-density is not finite at {x:?}"
        )));
    }
    Ok(-logp + 0.5 * p.iter().map(|v| v * v).sum::<f64>())
}

/// Runs [`surrogate_trajectory`] and scores every step against the true target.
pub fn acceptance_profile(
    score: &dyn ScoreFunction,
    target_logp: &dyn Fn(&[f64]) -> Result<f64>,
    x0: &[f64],
    config: &HmcConfig,
) -> Result<TrajectoryReport> {
    let traj = surrogate_trajectory(score, x0, config)?;
    let h0 = hamiltonian(target_logp, &traj.positions[0], &traj.momenta[0])?;
    let mut per_step = Vec::with_capacity(config.num_steps);
    for (x, p) in traj.positions.iter().zip(&traj.momenta).skip(1) {
        let h = hamiltonian(target_logp, x, p)?;
        per_step.push((h0 - h).exp().min(1.0));
    }
    per_step.resize(config.num_steps, 0.0);
    let mean_acceptance = if per_step.is_empty() {
        1.0
    } else {
        per_step.iter().sum::<f64>() / per_step.len() as f64
    };
    Ok(TrajectoryReport {
        states: traj.positions,
        per_step_acceptance: per_step,
        mean_acceptance,
        truncated_at: traj.truncated_at,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub model_id: String,
    pub mean_acceptance: f64,
    pub q05: f64,
    pub q95: f64,
    /// Successful runs.
    pub n_runs: usize,
    pub failed_runs: usize,
    /// `"ok"`, or the first error when every run failed.
    pub status: String,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean acceptance with 5%/95% quantiles over `repetitions x starts` runs per
/// model. Run `(r, s)` uses momentum seed `derive_seed(config.seed, [r, s])`
/// for every model, so models are compared on common random numbers.
pub fn acceptance_experiment(
    models: &[(String, &dyn ScoreFunction)],
    target_logp: &dyn Fn(&[f64]) -> Result<f64>,
    starts: &[Vec<f64>],
    config: &HmcConfig,
    repetitions: usize,
) -> Result<Vec<AcceptanceRow>> {
    if models.is_empty() || starts.is_empty() || repetitions == 0 {
        return Err(Error::invalid(
            "acceptance experiment needs models, starts and repetitions",
        ));
    }
    config.validate()?;
    let mut rows = Vec::with_capacity(models.len());
    for (id, score) in models {
        let mut means = Vec::with_capacity(repetitions * starts.len());
        let mut failed = 0;
        let mut first_error = None;
        for r in 0..repetitions {
            for (s, x0) in starts.iter().enumerate() {
                let run = HmcConfig {
                    seed: rng::derive_seed(config.seed, &[r as u64, s as u64]),
                    ..*config
                };
                match acceptance_profile(*score, target_logp, x0, &run) {
                    Ok(rep) => means.push(rep.mean_acceptance),
                    Err(e) => {
                        failed += 1;
                        first_error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
        }
        let row = if means.is_empty() {
            AcceptanceRow {
                model_id: id.clone(),
                mean_acceptance: f64::NAN,
                q05: f64::NAN,
                q95: f64::NAN,
                n_runs: 0,
                failed_runs: failed,
                status: format!("failed: {}", first_error.unwrap_or_default()),
            }
        } else {
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            means.sort_by(f64::total_cmp);
            AcceptanceRow {
                model_id: id.clone(),
                mean_acceptance: mean,
                q05: quantile(&means, 0.05),
                q95: quantile(&means, 0.95),
                n_runs: means.len(),
                failed_runs: failed,
                status: "ok".into(),
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// CSV with header `model_id,mean_acceptance,q05,q95,n_runs`.
pub fn acceptance_to_csv(rows: &[AcceptanceRow]) -> String {
    let mut out = String::from("model_id,mean_acceptance,q05,q95,n_runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model_id.replace([',', '\n'], "_"),
            r.mean_acceptance,
            r.q05,
            r.q95,
            r.n_runs
        ));
    }
    out
}

pub fn write_acceptance_csv(rows: &[AcceptanceRow], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(acceptance_to_csv(rows).as_bytes())?;
    Ok(())
}
