use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::assembly::{derivative_fns, inner_products, xi_norm_sq, xi_projection};
use super::{
    check_lambda, BaseMeasure, BasisSpec, FitReport, ModelKind, RegularizedObjective, ScoreModel,
};
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::linalg::{relative_residual, spd_solve};
use crate::points::PointSet;

/// Largest `n * d` the full solver accepts unless forced.
pub const DEFAULT_MAX_SYSTEM: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullOptions {
    pub max_system: usize,
    /// Ignore `max_system`.
    pub force: bool,
}

impl Default for FullOptions {
    fn default() -> Self {
        Self {
            max_system: DEFAULT_MAX_SYSTEM,
            force: false,
        }
    }
}

/// Assembled full problem. With `f = -xi/lambda + sum beta_(a,i) d_i k(X_a, .)`,
///
/// ```text
/// d_j f(X_b)         = (G beta - h/lambda)_(b,j)
/// |f|_H^2            = |xi|^2/lambda^2 - 2 beta'h/lambda + beta'G beta
/// J + lambda/2 |f|^2 = -|xi|^2/(2 lambda) + |G beta - h/lambda|^2/(2n) + lambda/2 beta'G beta
/// ```
///
/// which is minimized by `(G + n lambda I) beta = h / lambda`.
#[derive(Debug, Clone)]
pub struct FullSystem {
    /// `G[(a,i),(b,j)] = d_{x_i} d_{y_j} k(X_a, X_b)`
    pub gram: DMatrix<f64>,
    /// `h[(b,i)] = d_i xi(X_b)`
    pub h: DVector<f64>,
    /// `|xi|_H^2`
    pub xi_norm_sq: f64,
    pub n: usize,
    pub lambda: f64,
}

impl FullSystem {
    pub fn assemble(
        x: &PointSet,
        kernel: &GaussianKernel,
        lambda: f64,
        base: &BaseMeasure,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let g = base.log_grad_rows(x.as_slice(), x.dim())?;
        let fns = derivative_fns(&BasisSpec::all_components(x.clone()).index_set, false);
        Ok(Self {
            gram: inner_products(kernel, x, &fns),
            h: xi_projection(kernel, x, &fns, x, &g),
            xi_norm_sq: xi_norm_sq(kernel, x, &g),
            n: x.len(),
            lambda,
        })
    }

    pub fn rkhs_norm_sq(&self, beta: &DVector<f64>) -> f64 {
        let l = self.lambda;
        self.xi_norm_sq / (l * l) - 2.0 * beta.dot(&self.h) / l + beta.dot(&(&self.gram * beta))
    }
}

impl RegularizedObjective for FullSystem {
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        let l = self.lambda;
        let grads = &self.gram * beta - &self.h / l;
        -self.xi_norm_sq / (2.0 * l)
            + grads.norm_squared() / (2.0 * self.n as f64)
            + 0.5 * l * beta.dot(&(&self.gram * beta))
    }

    fn rkhs_penalty(&self, beta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * self.rkhs_norm_sq(beta)
    }
}

/// Fits the full estimator by solving `(G + n lambda I) beta = h / lambda`.
/// The resulting model has `xi_scale = -1 / lambda`.
pub fn fit_full(
    x: &PointSet,
    kernel: GaussianKernel,
    lambda: f64,
    base: BaseMeasure,
    options: &FullOptions,
) -> Result<(ScoreModel, FitReport)> {
    check_lambda(lambda)?;
    let size = x.len() * x.dim();
    if size > options.max_system && !options.force {
        return Err(Error::Resource(format!(
            "full system of size n*d = {size} exceeds the cap of {}",
            options.max_system
        )));
    }
    let start = Instant::now();
    let system = FullSystem::assemble(x, &kernel, lambda, &base)?;
    let assembly_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut a = system.gram.clone();
    for k in 0..size {
        a[(k, k)] += x.len() as f64 * lambda;
    }
    let rhs = &system.h / lambda;
    let beta = spd_solve(a.clone(), &rhs)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let residual_norm = relative_residual(&(&a * &beta - &rhs), &rhs);

    let model = ScoreModel::full_from_parts(
        kernel,
        lambda,
        x.clone(),
        beta.iter().copied().collect(),
        -1.0 / lambda,
        base,
    )?;
    let report = FitReport {
        kind: ModelKind::Full,
        assembly_seconds,
        solve_seconds,
        jitter_used: 0.0,
        system_size: size,
        residual_norm,
        effective_rank: size,
        condition: None,
    };
    Ok((model, report))
}
