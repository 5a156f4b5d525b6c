use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::assembly::{derivative_fns, gradient_block, inner_products, xi_projection};
use super::{
    check_lambda, BaseMeasure, BasisSpec, FitReport, ModelKind, RegularizedObjective, ScoreModel,
};
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::linalg::{relative_residual, symmetric_solve};
use crate::points::PointSet;

/// Multiple of the identity added before pseudo-inversion.
pub const DEFAULT_JITTER: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NystromOptions {
    pub jitter: f64,
}

impl Default for NystromOptions {
    fn default() -> Self {
        Self {
            jitter: DEFAULT_JITTER,
        }
    }
}

/// Assembled Nystrom problem over the basis `phi_t`:
/// `B[(b,j), t] = d_j phi_t(X_b)`, `G[t,t'] = <phi_t, phi_t'>`, `h[t] = <xi, phi_t>`.
///
/// For `f = sum_t beta_t phi_t`,
/// `J(f) + lambda/2 |f|^2 = |B beta|^2/(2n) + beta'h + lambda/2 beta'G beta`.
#[derive(Debug, Clone)]
pub struct NystromSystem {
    pub b: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub h: DVector<f64>,
    pub n: usize,
    pub lambda: f64,
}

impl NystromSystem {
    /// Assembles the blocks for a (compacted) basis.
    pub fn assemble(
        x: &PointSet,
        basis: &BasisSpec,
        kernel: &GaussianKernel,
        lambda: f64,
        base: &BaseMeasure,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        basis.validate()?;
        Error::check_dim(x.dim(), basis.dim())?;
        let g = base.log_grad_rows(x.as_slice(), x.dim())?;
        let fns = derivative_fns(&basis.index_set, basis.second_order);
        Ok(Self {
            b: gradient_block(kernel, &basis.points, &fns, x),
            gram: inner_products(kernel, &basis.points, &fns),
            h: xi_projection(kernel, &basis.points, &fns, x, &g),
            n: x.len(),
            lambda,
        })
    }

    /// `B'B / n + lambda G + jitter I`.
    pub fn system_matrix(&self, jitter: f64) -> DMatrix<f64> {
        // the explicit transpose takes the blocked gemm path, unlike tr_mul
        let mut a = (self.b.transpose() * &self.b) / self.n as f64 + &self.gram * self.lambda;
        for k in 0..a.nrows() {
            a[(k, k)] += jitter;
        }
        a
    }
}

impl RegularizedObjective for NystromSystem {
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        (&self.b * beta).norm_squared() / (2.0 * self.n as f64)
            + beta.dot(&self.h)
            + self.rkhs_penalty(beta)
    }

    fn rkhs_penalty(&self, beta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * beta.dot(&(&self.gram * beta))
    }
}

/// Fits `beta = -(B'B/n + lambda G + jitter I)^+ h` over the basis.
pub fn fit_nystrom(
    x: &PointSet,
    basis: &BasisSpec,
    kernel: GaussianKernel,
    lambda: f64,
    base: BaseMeasure,
    options: &NystromOptions,
) -> Result<(ScoreModel, FitReport)> {
    check_lambda(lambda)?;
    if !(options.jitter >= 0.0) {
        return Err(Error::invalid("jitter must be nonnegative"));
    }
    let basis = basis.compact();
    let start = Instant::now();
    let system = NystromSystem::assemble(x, &basis, &kernel, lambda, &base)?;
    let a = system.system_matrix(options.jitter);
    let assembly_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let sol = symmetric_solve(&a, &system.h)?;
    let beta = -sol.x;
    let solve_seconds = start.elapsed().as_secs_f64();
    let residual_norm = relative_residual(&(&a * &beta + &sol.projected_rhs), &system.h);

    let mut model = ScoreModel::nystrom_from_parts(
        kernel,
        lambda,
        &basis,
        beta.iter().copied().collect(),
        base,
    )?;
    model.set_basis_provenance(basis.mode.clone(), basis.seed);
    let report = FitReport {
        kind: ModelKind::Nystrom,
        assembly_seconds,
        solve_seconds,
        jitter_used: options.jitter,
        system_size: basis.size(),
        residual_norm,
        effective_rank: sol.rank,
        condition: Some(sol.condition),
    };
    Ok((model, report))
}
