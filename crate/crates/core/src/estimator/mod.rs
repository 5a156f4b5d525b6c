//! Score-matching estimators in the Gaussian-kernel exponential family.
//!
//! All three fitters minimize the regularized empirical score-matching loss
//!
//! ```text
//! J(f) + lambda/2 |f|_H^2,   J(f) = 1/n sum_b sum_i [ d_i^2 f(X_b) + 1/2 (d_i f(X_b))^2 + d_i f(X_b) d_i log q0(X_b) ]
//! ```
//!
//! over different subspaces of the RKHS: the span of all derivative
//! components of the training set plus `xi` ([`fit_full`]), a subsampled
//! set of derivative components ([`fit_nystrom`]), or plain kernel functions
//! at chosen points ([`fit_lite`]). The last term of `J` vanishes for a
//! uniform base measure.

mod assembly;
mod base_measure;
mod basis;
mod full;
mod lite;
mod model;
mod nystrom;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use base_measure::{BaseMeasure, LogGradFn};
pub use basis::{make_basis, BasisMode, BasisRequest, BasisSpec};
pub use full::{fit_full, FullOptions, FullSystem, DEFAULT_MAX_SYSTEM};
pub use lite::{fit_lite, LiteOptions, LiteRegularizer, LiteSystem};
pub use model::{FieldDerivatives, ModelKind, ScoreModel, MODEL_FORMAT};
pub use nystrom::{fit_nystrom, NystromOptions, NystromSystem, DEFAULT_JITTER};

/// Solver diagnostics for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: ModelKind,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub jitter_used: f64,
    pub system_size: usize,
    /// `|A beta - rhs| / |rhs|`, with `rhs` projected onto the range of `A` for pseudo-inverse solves.
    pub residual_norm: f64,
    /// Number of eigenvalues retained by the pseudo-inverse (full rank for Cholesky solves).
    pub effective_rank: usize,
    /// Condition estimate of the solved system, when available.
    pub condition: Option<f64>,
}

/// The regularized objective of an assembled problem, as a function of the coefficients.
pub trait RegularizedObjective {
    /// `J(f_beta) + lambda/2 |f_beta|_H^2` (plus any explicit `|beta|^2` penalty of the estimator).
    fn objective(&self, beta: &DVector<f64>) -> f64;

    /// `lambda/2 |f_beta|_H^2` alone.
    fn rkhs_penalty(&self, beta: &DVector<f64>) -> f64;

    /// The function the solver minimizes: [`objective`](Self::objective) plus
    /// `jitter/2 |beta|^2`.
    fn penalized_objective(&self, beta: &DVector<f64>, jitter: f64) -> f64 {
        self.objective(beta) + 0.5 * jitter * beta.norm_squared()
    }
}

pub(crate) fn check_lambda(lambda: f64) -> crate::Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::invalid(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}
