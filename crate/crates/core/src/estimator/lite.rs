use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assembly::{gradient_block, inner_products, kernel_fns, xi_projection};
use super::{check_lambda, BaseMeasure, FitReport, ModelKind, RegularizedObjective, ScoreModel};
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::linalg::{relative_residual, symmetric_solve};
use crate::points::PointSet;

/// Regularizer of the lite estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiteRegularizer {
    /// `lambda/2 |f|_H^2`
    RkhsNorm,
    /// `lambda/2 (|f|_H^2 + |beta|^2)`
    #[default]
    RkhsPlusL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LiteOptions {
    pub regularizer: LiteRegularizer,
    pub jitter: f64,
}

/// Assembled lite problem over `y_a = k(Y_a, .)`:
/// `B'[(b,i), a] = d_i k(X_b, Y_a)`, `G'[a,a'] = k(Y_a, Y_a')`, `h'[a] = xi(Y_a)`.
#[derive(Debug, Clone)]
pub struct LiteSystem {
    pub b: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub h: DVector<f64>,
    pub n: usize,
    pub lambda: f64,
    pub regularizer: LiteRegularizer,
}

impl LiteSystem {
    pub fn assemble(
        x: &PointSet,
        y: &PointSet,
        kernel: &GaussianKernel,
        lambda: f64,
        regularizer: LiteRegularizer,
        base: &BaseMeasure,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if y.is_empty() {
            return Err(Error::invalid("lite basis needs at least one point"));
        }
        Error::check_dim(x.dim(), y.dim())?;
        let g = base.log_grad_rows(x.as_slice(), x.dim())?;
        let fns = kernel_fns(y.len());
        Ok(Self {
            b: gradient_block(kernel, y, &fns, x),
            gram: inner_products(kernel, y, &fns),
            h: xi_projection(kernel, y, &fns, x, &g),
            n: x.len(),
            lambda,
            regularizer,
        })
    }

    /// `B'^T B' / n + lambda R + jitter I`, `R = G'` or `G' + I`.
    pub fn system_matrix(&self, jitter: f64) -> DMatrix<f64> {
        // the explicit transpose takes the blocked gemm path, unlike tr_mul
        let mut a = (self.b.transpose() * &self.b) / self.n as f64 + &self.gram * self.lambda;
        let extra = match self.regularizer {
            LiteRegularizer::RkhsNorm => 0.0,
            LiteRegularizer::RkhsPlusL2 => self.lambda,
        };
        for k in 0..a.nrows() {
            a[(k, k)] += extra + jitter;
        }
        a
    }
}

impl RegularizedObjective for LiteSystem {
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        let l2 = match self.regularizer {
            LiteRegularizer::RkhsNorm => 0.0,
            LiteRegularizer::RkhsPlusL2 => 0.5 * self.lambda * beta.norm_squared(),
        };
        (&self.b * beta).norm_squared() / (2.0 * self.n as f64)
            + beta.dot(&self.h)
            + self.rkhs_penalty(beta)
            + l2
    }

    fn rkhs_penalty(&self, beta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * beta.dot(&(&self.gram * beta))
    }
}

/// Fits `beta = -(B'^T B'/n + lambda R)^+ h'` with basis functions `k(Y_a, .)`.
pub fn fit_lite(
    x: &PointSet,
    y: &PointSet,
    kernel: GaussianKernel,
    lambda: f64,
    base: BaseMeasure,
    options: &LiteOptions,
) -> Result<(ScoreModel, FitReport)> {
    check_lambda(lambda)?;
    if !(options.jitter >= 0.0) {
        return Err(Error::invalid("jitter must be nonnegative"));
    }
    let start = Instant::now();
    let system = LiteSystem::assemble(x, y, &kernel, lambda, options.regularizer, &base)?;
    let a = system.system_matrix(options.jitter);
    let assembly_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let sol = symmetric_solve(&a, &system.h)?;
    let beta = -sol.x;
    let solve_seconds = start.elapsed().as_secs_f64();
    let residual_norm = relative_residual(&(&a * &beta + &sol.projected_rhs), &system.h);

    let model = ScoreModel::lite_from_parts(
        kernel,
        lambda,
        y.clone(),
        beta.iter().copied().collect(),
        base,
    )?;
    let report = FitReport {
        kind: ModelKind::Lite,
        assembly_seconds,
        solve_seconds,
        jitter_used: options.jitter,
        system_size: y.len(),
        residual_norm,
        effective_rank: sol.rank,
        condition: Some(sol.condition),
    };
    Ok((model, report))
}
