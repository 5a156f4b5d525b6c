//! Gaussian kernel `k(x, y) = exp(-|x - y|^2 / sigma)` and its mixed partial
//! derivatives up to order (2, 2).
//!
//! The kernel is a function of `u = x - y` only and factorizes over
//! coordinates, `k = prod_l phi(u_l)` with `phi(t) = exp(-t^2 / sigma)`.
//! Writing `c = 2 / sigma`, the one-dimensional derivatives are
//! `phi^(m)(t) = H_m(t) phi(t)` with
//!
//! ```text
//! H_0 = 1
//! H_1 = -c t
//! H_2 = c^2 t^2 - c
//! H_3 = -c^3 t^3 + 3 c^2 t
//! H_4 = c^4 t^4 - 6 c^3 t^2 + 3 c^2
//! ```
//!
//! Since `d/dy = -d/du`, a derivative of order `alpha` in `x` and `beta` in
//! `y` picks up the sign `(-1)^|beta|`. Every operation below is one line of
//! this rule: for `i != j` the factors multiply across coordinates, for
//! `i == j` the orders add within a coordinate. For example
//!
//! ```text
//! d_{x_i} d_{y_j} k      = -[i == j ? H_2(u_i) : H_1(u_i) H_1(u_j)] k
//! d_{x_i} d_{y_j}^2 k    =  [i == j ? H_3(u_i) : H_1(u_i) H_2(u_j)] k
//! d_{x_i}^2 d_{y_j}^2 k  =  [i == j ? H_4(u_i) : H_2(u_i) H_2(u_j)] k
//! ```
//!
//! The checked pointwise methods on [`GaussianKernel`] validate dimensions.
//! Hot loops go through [`KernelPair`], which evaluates `k` once per point
//! pair and then produces any derivative entry without allocating.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Gaussian kernel with bandwidth `sigma`, `k(x, y) = exp(-|x - y|^2 / sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    sigma: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Precomputes `k(x, y)` for repeated derivative queries. Dimensions are not checked.
    #[inline]
    pub fn pair<'a>(&self, x: &'a [f64], y: &'a [f64]) -> KernelPair<'a> {
        debug_assert_eq!(x.len(), y.len());
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        KernelPair {
            x,
            y,
            c: 2.0 / self.sigma,
            k: (-sq / self.sigma).exp(),
        }
    }

    fn checked_pair<'a>(&self, x: &'a [f64], y: &'a [f64]) -> Result<KernelPair<'a>> {
        if x.is_empty() {
            return Err(Error::invalid("points must have dimension at least 1"));
        }
        Error::check_dim(x.len(), y.len())?;
        Ok(self.pair(x, y))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.checked_pair(x, y)?.value())
    }

    /// Gradient in the first argument, `-(2/sigma)(x - y) k(x, y)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let p = self.checked_pair(x, y)?;
        Ok((0..x.len()).map(|i| p.dx(i)).collect())
    }

    /// Diagonal second derivatives in the first argument, `d_{x_i}^2 k`.
    pub fn hess_x_diag(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let p = self.checked_pair(x, y)?;
        Ok((0..x.len()).map(|i| p.dxx(i)).collect())
    }

    /// Entry `(i, j)` is `d_{x_i} d_{y_j} k(x, y)`.
    pub fn cross_hessian(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.checked_pair(x, y)?;
        let d = x.len();
        Ok(DMatrix::from_fn(d, d, |i, j| p.dx_dy(i, j)))
    }

    /// Entry `(i, j)` is `d_{x_i} d_{y_j}^2 k(x, y)`.
    pub fn dx_dyy(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.checked_pair(x, y)?;
        let d = x.len();
        Ok(DMatrix::from_fn(d, d, |i, j| p.dx_dyy(i, j)))
    }

    /// Entry `(i, j)` is `d_{x_i}^2 d_{y_j} k(x, y)`.
    pub fn dxx_dy(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.checked_pair(x, y)?;
        let d = x.len();
        Ok(DMatrix::from_fn(d, d, |i, j| p.dxx_dy(i, j)))
    }

    /// Entry `(i, j)` is `d_{x_i}^2 d_{y_j}^2 k(x, y)`.
    pub fn dxx_dyy(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.checked_pair(x, y)?;
        let d = x.len();
        Ok(DMatrix::from_fn(d, d, |i, j| p.dxx_dyy(i, j)))
    }

    /// Kernel matrix `K[a, b] = k(xs_a, ys_b)`.
    pub fn gram(&self, xs: &PointSet, ys: &PointSet) -> Result<DMatrix<f64>> {
        Error::check_dim(xs.dim(), ys.dim())?;
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |a, b| {
            self.pair(xs.row(a), ys.row(b)).value()
        }))
    }

    /// Block matrix with entry `((a, i), (b, j)) = d_{x_i} d_{y_j} k(xs_a, ys_b)`,
    /// rows and columns indexed point-major (`a * d + i`).
    pub fn cross_hessian_block(&self, xs: &PointSet, ys: &PointSet) -> Result<DMatrix<f64>> {
        Error::check_dim(xs.dim(), ys.dim())?;
        let d = xs.dim();
        let mut out = DMatrix::zeros(xs.len() * d, ys.len() * d);
        for b in 0..ys.len() {
            for a in 0..xs.len() {
                let p = self.pair(xs.row(a), ys.row(b));
                for j in 0..d {
                    for i in 0..d {
                        out[(a * d + i, b * d + j)] = p.dx_dy(i, j);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `H_m(t)` from the module docs.
#[inline]
fn hermite(order: u8, t: f64, c: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => -c * t,
        2 => c * c * t * t - c,
        3 => {
            let c2 = c * c;
            -c2 * c * t * t * t + 3.0 * c2 * t
        }
        4 => {
            let c2 = c * c;
            let t2 = t * t;
            c2 * c2 * t2 * t2 - 6.0 * c2 * c * t2 + 3.0 * c2
        }
        _ => unreachable!("derivatives above order 4 are not needed"),
    }
}

/// A point pair with `k(x, y)` already evaluated.
#[derive(Debug, Clone, Copy)]
pub struct KernelPair<'a> {
    x: &'a [f64],
    y: &'a [f64],
    c: f64,
    k: f64,
}

impl KernelPair<'_> {
    #[inline]
    fn h(&self, order: u8, i: usize) -> f64 {
        hermite(order, self.x[i] - self.y[i], self.c)
    }

    /// `d_{x_i}^x_order d_{y_j}^y_order k` for orders up to 2 each.
    /// With `y_order = 0` the value does not depend on `j`.
    #[inline]
    pub fn partial(&self, x_order: u8, i: usize, y_order: u8, j: usize) -> f64 {
        let sign = if y_order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let poly = if y_order == 0 {
            self.h(x_order, i)
        } else if x_order == 0 {
            self.h(y_order, j)
        } else if i == j {
            self.h(x_order + y_order, i)
        } else {
            self.h(x_order, i) * self.h(y_order, j)
        };
        sign * poly * self.k
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.k
    }

    /// `d_{x_i} k`
    #[inline]
    pub fn dx(&self, i: usize) -> f64 {
        self.h(1, i) * self.k
    }

    /// `d_{x_i}^2 k`
    #[inline]
    pub fn dxx(&self, i: usize) -> f64 {
        self.h(2, i) * self.k
    }

    /// `d_{y_i} k`
    #[inline]
    pub fn dy(&self, i: usize) -> f64 {
        -self.h(1, i) * self.k
    }

    /// `d_{y_i}^2 k`
    #[inline]
    pub fn dyy(&self, i: usize) -> f64 {
        self.h(2, i) * self.k
    }

    /// `d_{x_i} d_{y_j} k`
    #[inline]
    pub fn dx_dy(&self, i: usize, j: usize) -> f64 {
        self.partial(1, i, 1, j)
    }

    /// `d_{x_i} d_{y_j}^2 k`
    #[inline]
    pub fn dx_dyy(&self, i: usize, j: usize) -> f64 {
        self.partial(1, i, 2, j)
    }

    /// `d_{x_i}^2 d_{y_j} k`
    #[inline]
    pub fn dxx_dy(&self, i: usize, j: usize) -> f64 {
        self.partial(2, i, 1, j)
    }

    /// `d_{x_i}^2 d_{y_j}^2 k`
    #[inline]
    pub fn dxx_dyy(&self, i: usize, j: usize) -> f64 {
        self.partial(2, i, 2, j)
    }
}
