//! Score matching in Gaussian-kernel exponential families.
//!
//! A density `p_f(x) ∝ exp(f(x)) q0(x)` with `f` in the RKHS of
//! `k(x, y) = exp(-|x - y|^2 / sigma)` is fitted by minimizing the
//! regularized empirical score-matching loss. Three estimators are provided:
//!
//! * [`fit_full`]: exact representer solution, `O(n^3 d^3)`.
//! * [`fit_nystrom`]: solution restricted to a subsampled set of basis
//!   functions `d_i k(Y_a, .)`, `O(n m^2 d^3)`.
//! * [`fit_lite`]: solution over plain kernel functions `k(Y_a, .)`.
//!
//! ```
//! use kexfam::{fit_nystrom, make_basis, sample_ring, BaseMeasure, BasisRequest,
//!              GaussianKernel, NystromOptions, RingParams};
//!
//! let data = sample_ring(200, 2, &RingParams::default(), 1)?;
//! let basis = make_basis(&data.points, &BasisRequest::AllComponents { m: 40 }, 2)?;
//! let (model, report) = fit_nystrom(
//!     &data.points,
//!     &basis,
//!     GaussianKernel::new(2.0)?,
//!     1e-3,
//!     BaseMeasure::Uniform,
//!     &NystromOptions::default(),
//! )?;
//! assert!(report.residual_norm < 1e-6);
//! let score = model.eval_score(&[3.0, 0.0])?;
//! assert_eq!(score.len(), 2);
//! # Ok::<(), kexfam::Error>(())
//! ```

pub mod bench;
pub mod cli;
pub mod dataset;
mod error;
pub mod estimator;
pub mod hmc;
pub mod kernel;
pub mod linalg;
pub mod objective;
mod points;
pub mod rng;

pub use dataset::{
    sample_gaussian, sample_grid, sample_ring, Dataset, GaussianParams, Generator, GridOptions,
    GridParams, RingParams, SyntheticDensity,
};
pub use error::{Error, Result};
pub use estimator::{
    fit_full, fit_lite, fit_nystrom, make_basis, BaseMeasure, BasisMode, BasisRequest, BasisSpec,
    FitReport, FullOptions, LiteOptions, LiteRegularizer, ModelKind, NystromOptions,
    RegularizedObjective, ScoreModel,
};
pub use kernel::{GaussianKernel, KernelPair};
pub use objective::{fisher_divergence, grid_search, j_hat, FnScore, ScoreFunction};
pub use points::PointSet;
