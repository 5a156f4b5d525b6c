//! Helpers shared by the integration tests: random problems, finite
//! differences and tolerance checks.

#![allow(dead_code)]

use kexfam::estimator::{FullSystem, LiteSystem, NystromSystem};
use kexfam::rng::stream;
use kexfam::{
    fit_full, fit_lite, fit_nystrom, j_hat, make_basis, BaseMeasure, BasisRequest, BasisSpec,
    FitReport, FullOptions, GaussianKernel, LiteOptions, NystromOptions, PointSet,
    RegularizedObjective, ScoreModel,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `n x d` points uniform on `[-scale, scale]^d`.
pub fn uniform_points(n: usize, d: usize, scale: f64, seed: u64) -> PointSet {
    let mut r = stream(seed);
    let data = (0..n * d).map(|_| r.random_range(-scale..scale)).collect();
    PointSet::new(data, d).unwrap()
}

pub fn uniform_vec(d: usize, scale: f64, r: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-scale..scale)).collect()
}

/// `|a - b| <= rtol * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, rtol: f64, floor: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(floor)
}

#[track_caller]
pub fn assert_close(a: f64, b: f64, rtol: f64, floor: f64) {
    assert!(
        close(a, b, rtol, floor),
        "{a} vs {b}: rel err {:e} > {rtol:e}",
        (a - b).abs() / a.abs().max(b.abs()).max(floor)
    );
}

/// Central difference of `f` along coordinate `i`.
pub fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Second central difference of `f` along coordinate `i`.
pub fn central2(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - 2.0 * f(x) + f(&xm)) / (h * h)
}

/// Relative error of two vectors in the max norm.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

/// A small random estimation problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x: PointSet,
    pub kernel: GaussianKernel,
    pub lambda: f64,
    pub seed: u64,
}

impl Problem {
    /// `n` in `[5, 20]`, `d` in `[1, 3]`, sigma in `[0.5, 3]`, lambda in `[1e-3, 1]`.
    pub fn random(seed: u64) -> Self {
        let mut r = stream(seed);
        let n = r.random_range(5..=20);
        let d = r.random_range(1..=3);
        let sigma = r.random_range(0.5..3.0);
        let lambda = 10f64.powf(r.random_range(-3.0..0.0));
        Self {
            x: uniform_points(n, d, 1.5, seed ^ 0x9e37),
            kernel: GaussianKernel::new(sigma).unwrap(),
            lambda,
            seed,
        }
    }

    pub fn full(&self) -> (ScoreModel, FitReport) {
        fit_full(
            &self.x,
            self.kernel,
            self.lambda,
            BaseMeasure::Uniform,
            &FullOptions::default(),
        )
        .unwrap()
    }

    /// Nystrom on all components of `m` random points.
    pub fn nystrom(&self, m: usize) -> (ScoreModel, FitReport) {
        let basis = make_basis(&self.x, &BasisRequest::AllComponents { m }, self.seed).unwrap();
        fit_nystrom(
            &self.x,
            &basis,
            self.kernel,
            self.lambda,
            BaseMeasure::Uniform,
            &NystromOptions::default(),
        )
        .unwrap()
    }

    pub fn lite(&self, m: usize, options: &LiteOptions) -> (ScoreModel, FitReport) {
        let basis = make_basis(&self.x, &BasisRequest::AllComponents { m }, self.seed).unwrap();
        fit_lite(
            &self.x,
            &basis.points,
            self.kernel,
            self.lambda,
            BaseMeasure::Uniform,
            options,
        )
        .unwrap()
    }

    pub fn full_system(&self) -> FullSystem {
        FullSystem::assemble(&self.x, &self.kernel, self.lambda, &BaseMeasure::Uniform).unwrap()
    }

    /// System assembled on the (compacted) basis stored in a fitted Nystrom model.
    pub fn nystrom_system(&self, model: &ScoreModel) -> NystromSystem {
        NystromSystem::assemble(
            &self.x,
            model.basis(),
            &self.kernel,
            self.lambda,
            &BaseMeasure::Uniform,
        )
        .unwrap()
    }

    pub fn lite_system(&self, model: &ScoreModel, options: &LiteOptions) -> LiteSystem {
        LiteSystem::assemble(
            &self.x,
            model.points(),
            &self.kernel,
            self.lambda,
            options.regularizer,
            &BaseMeasure::Uniform,
        )
        .unwrap()
    }
}

/// Worst tensor-wise relative errors of the closed-form kernel derivatives
/// against central differences of the next-lower-order closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelFdErrors {
    pub grad: f64,
    pub cross_hessian: f64,
    pub dx_dyy: f64,
    pub dxx_dyy: f64,
}

impl KernelFdErrors {
    fn merge(&mut self, other: KernelFdErrors) {
        self.grad = self.grad.max(other.grad);
        self.cross_hessian = self.cross_hessian.max(other.cross_hessian);
        self.dx_dyy = self.dx_dyy.max(other.dx_dyy);
        self.dxx_dyy = self.dxx_dyy.max(other.dxx_dyy);
    }
}

/// One random `(x, y, sigma)` with `d` in `1..=5`.
pub fn kernel_fd_case(seed: u64) -> KernelFdErrors {
    let mut r = stream(seed);
    let d = r.random_range(1..=5);
    let sigma: f64 = r.random_range(0.5..4.0);
    let kern = GaussianKernel::new(sigma).unwrap();
    let x = uniform_vec(d, 1.0, &mut r);
    let y = uniform_vec(d, 1.0, &mut r);
    let h = 1e-5 * sigma.sqrt();

    let grad = kern.grad_x(&x, &y).unwrap();
    let fd_grad: Vec<f64> = (0..d)
        .map(|i| central(&|xx| kern.eval(xx, &y).unwrap(), &x, i, h))
        .collect();

    let mut cross = Vec::new();
    let mut fd_cross = Vec::new();
    let mut third = Vec::new();
    let mut fd_third = Vec::new();
    let mut fourth = Vec::new();
    let mut fd_fourth = Vec::new();
    let ch = kern.cross_hessian(&x, &y).unwrap();
    let t3 = kern.dx_dyy(&x, &y).unwrap();
    let t4 = kern.dxx_dyy(&x, &y).unwrap();
    for i in 0..d {
        for j in 0..d {
            // d/dy_j of d_{x_i} k
            cross.push(ch[(i, j)]);
            fd_cross.push(central(&|yy| kern.grad_x(&x, yy).unwrap()[i], &y, j, h));
            // d/dy_j of d_{x_i} d_{y_j} k
            third.push(t3[(i, j)]);
            fd_third.push(central(
                &|yy| kern.cross_hessian(&x, yy).unwrap()[(i, j)],
                &y,
                j,
                h,
            ));
            // d/dx_i of d_{x_i} d_{y_j}^2 k
            fourth.push(t4[(i, j)]);
            fd_fourth.push(central(
                &|xx| kern.dx_dyy(xx, &y).unwrap()[(i, j)],
                &x,
                i,
                h,
            ));
        }
    }
    KernelFdErrors {
        grad: vec_rel_err(&grad, &fd_grad),
        cross_hessian: vec_rel_err(&cross, &fd_cross),
        dx_dyy: vec_rel_err(&third, &fd_third),
        dxx_dyy: vec_rel_err(&fourth, &fd_fourth),
    }
}

/// Worst errors over `count` random cases.
pub fn kernel_fd_suite(count: u64, seed: u64) -> KernelFdErrors {
    let mut worst = KernelFdErrors::default();
    for c in 0..count {
        worst.merge(kernel_fd_case(kexfam::rng::derive_seed(seed, &[c])));
    }
    worst
}

/// Largest decrease of `obj` over 100 random perturbations of norm `1e-3`.
pub fn worst_decrease(obj: &dyn Fn(&DVector<f64>) -> f64, beta: &DVector<f64>, seed: u64) -> f64 {
    let mut r = stream(seed);
    let base = obj(beta);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let mut d = DVector::from_fn(beta.len(), |_, _| r.random_range(-1.0..1.0));
        d *= 1e-3 / d.norm();
        worst = worst.max(base - obj(&(beta + d)));
    }
    worst
}

/// `J(f)` at the training points plus `lambda/2 |f|^2` plus any explicit L2 term.
pub fn pointwise_objective(model: &ScoreModel, x: &PointSet, rkhs_sq: f64, l2: f64) -> f64 {
    j_hat(model, x).unwrap() + 0.5 * model.lambda() * rkhs_sq + l2
}

/// `A` and `b` of the original lite estimator, built literally from the matrix formulas.
pub fn lite_reference(x: &PointSet, tau: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let d = x.dim();
    let kmat = DMatrix::from_fn(n, n, |a, b| {
        let d2: f64 = x
            .row(a)
            .iter()
            .zip(x.row(b))
            .map(|(u, v)| (u - v).powi(2))
            .sum();
        (-d2 / tau).exp()
    });
    let ones = DVector::from_element(n, 1.0);
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for i in 0..d {
        let xi = DVector::from_fn(n, |r, _| x.row(r)[i]);
        let si = xi.component_mul(&xi);
        let dx = DMatrix::from_diagonal(&xi);
        let ds = DMatrix::from_diagonal(&si);
        let m = &dx * &kmat - &kmat * &dx;
        a -= &m * &m;
        b += (&kmat * &si + &ds * &kmat * &ones - 2.0 * &dx * &kmat * &xi) * (2.0 / tau)
            - &kmat * &ones;
    }
    (a, b, kmat)
}

/// Optimal penalized Nystrom objective for an explicit basis.
pub fn optimal_objective(p: &Problem, y: &PointSet, index_set: Vec<(usize, usize)>) -> f64 {
    let basis = BasisSpec::explicit(y.clone(), index_set).unwrap();
    let opts = NystromOptions::default();
    let (model, _) = fit_nystrom(
        &p.x,
        &basis,
        p.kernel,
        p.lambda,
        BaseMeasure::Uniform,
        &opts,
    )
    .unwrap();
    let sys = p.nystrom_system(&model);
    sys.penalized_objective(&DVector::from_column_slice(model.beta()), opts.jitter)
}

/// Model derivatives against central differences of `eval_f`.
pub fn derivative_errors(model: &ScoreModel, seed: u64) -> (f64, f64) {
    let d = model.dim();
    let s = model.kernel().sigma().sqrt();
    let mut r = stream(seed);
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    let f = |x: &[f64]| model.eval_f(x).unwrap();
    for _ in 0..30 {
        let x = uniform_vec(d, 2.0, &mut r);
        let grad = model.eval_grad_f(&x).unwrap();
        let diag = model.eval_second_diag(&x).unwrap();
        let fd1: Vec<f64> = (0..d).map(|i| central(&f, &x, i, 1e-5 * s)).collect();
        let fd2: Vec<f64> = (0..d).map(|i| central2(&f, &x, i, 2e-4 * s)).collect();
        e1 = e1.max(vec_rel_err(&grad, &fd1));
        e2 = e2.max(vec_rel_err(&diag, &fd2));
    }
    (e1, e2)
}
