//! Gram-block assembly shared by the fitters.
//!
//! Every basis function used here has the form `phi(z) = d_{x_i}^o k(Y_a, z)`
//! for an anchor `Y_a`, a coordinate `i` and an order `o` in {0, 1, 2}
//! (`o = 0` is the plain kernel function, where `i` is ignored). By the
//! derivative reproducing property all the quantities the solvers need are
//! kernel partials:
//!
//! ```text
//! d_{z_j} phi(X_b)              = d_{x_i}^o d_{y_j} k(Y_a, X_b)          (rows of B)
//! <phi, phi'>_H                 = d_{x_i}^o d_{y_j}^o' k(Y_a, Y_a')      (G)
//! <xi, phi>_H                   = 1/n sum_b sum_j d_{x_i}^o d_{y_j}^2 k(Y_a, X_b)
//!                                   + d_{x_i}^o d_{y_j} k(Y_a, X_b) g_{b,j}   (h)
//! ```
//!
//! with `g_{b,j} = d_j log q0(X_b)` and
//! `xi = 1/n sum_b sum_j d_j^2 k(X_b, .) + d_j k(X_b, .) g_{b,j}`.

use nalgebra::{DMatrix, DVector};

use crate::kernel::GaussianKernel;
use crate::points::PointSet;

/// One basis function `d_{x_dim}^order k(anchors[point], .)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct BasisFn {
    pub point: usize,
    pub dim: usize,
    pub order: u8,
}

/// Derivative terms for a point set: `d_i` for each listed component, then
/// optionally `d_i^2` for the same components.
pub(crate) fn derivative_fns(index_set: &[(usize, usize)], second_order: bool) -> Vec<BasisFn> {
    let first = index_set.iter().map(|&(point, dim)| BasisFn {
        point,
        dim,
        order: 1,
    });
    let second = index_set.iter().map(|&(point, dim)| BasisFn {
        point,
        dim,
        order: 2,
    });
    if second_order {
        first.chain(second).collect()
    } else {
        first.collect()
    }
}

/// Plain kernel functions `k(Y_a, .)`, one per anchor.
pub(crate) fn kernel_fns(m: usize) -> Vec<BasisFn> {
    (0..m)
        .map(|point| BasisFn {
            point,
            dim: 0,
            order: 0,
        })
        .collect()
}

/// `B[(b, j), t] = d_{z_j} phi_t(X_b)`, shape `(n d) x T`.
pub(crate) fn gradient_block(
    kernel: &GaussianKernel,
    anchors: &PointSet,
    fns: &[BasisFn],
    xs: &PointSet,
) -> DMatrix<f64> {
    let d = xs.dim();
    let mut out = DMatrix::zeros(xs.len() * d, fns.len());
    for (t, f) in fns.iter().enumerate() {
        let y = anchors.row(f.point);
        let mut col = out.column_mut(t);
        for b in 0..xs.len() {
            let pair = kernel.pair(y, xs.row(b));
            for j in 0..d {
                col[b * d + j] = pair.partial(f.order, f.dim, 1, j);
            }
        }
    }
    out
}

/// `G[t, t'] = <phi_t, phi_t'>_H`.
pub(crate) fn inner_products(
    kernel: &GaussianKernel,
    anchors: &PointSet,
    fns: &[BasisFn],
) -> DMatrix<f64> {
    let size = fns.len();
    let mut out = DMatrix::zeros(size, size);
    for s in 0..size {
        let fs = fns[s];
        for t in s..size {
            let ft = fns[t];
            let pair = kernel.pair(anchors.row(fs.point), anchors.row(ft.point));
            let v = pair.partial(fs.order, fs.dim, ft.order, ft.dim);
            out[(s, t)] = v;
            out[(t, s)] = v;
        }
    }
    out
}

/// `h[t] = <xi, phi_t>_H`, with `base_grad` the row-major `grad log q0` at `xs`.
pub(crate) fn xi_projection(
    kernel: &GaussianKernel,
    anchors: &PointSet,
    fns: &[BasisFn],
    xs: &PointSet,
    base_grad: &[f64],
) -> DVector<f64> {
    let d = xs.dim();
    let n = xs.len() as f64;
    DVector::from_iterator(
        fns.len(),
        fns.iter().map(|f| {
            let y = anchors.row(f.point);
            let mut acc = 0.0;
            for b in 0..xs.len() {
                let pair = kernel.pair(y, xs.row(b));
                let g = &base_grad[b * d..(b + 1) * d];
                for j in 0..d {
                    acc += pair.partial(f.order, f.dim, 2, j);
                    if g[j] != 0.0 {
                        acc += pair.partial(f.order, f.dim, 1, j) * g[j];
                    }
                }
            }
            acc / n
        }),
    )
}

/// `|xi|_H^2` for the training set `xs`.
pub(crate) fn xi_norm_sq(kernel: &GaussianKernel, xs: &PointSet, base_grad: &[f64]) -> f64 {
    let d = xs.dim();
    let n = xs.len();
    let mut acc = 0.0;
    for a in 0..n {
        let ga = &base_grad[a * d..(a + 1) * d];
        for b in 0..n {
            let gb = &base_grad[b * d..(b + 1) * d];
            let pair = kernel.pair(xs.row(a), xs.row(b));
            for i in 0..d {
                for j in 0..d {
                    acc += pair.dxx_dyy(i, j)
                        + pair.dxx_dy(i, j) * gb[j]
                        + ga[i] * pair.dx_dyy(i, j)
                        + ga[i] * gb[j] * pair.dx_dy(i, j);
                }
            }
        }
    }
    acc / (n * n) as f64
}

/// Value, gradient and diagonal Hessian of `sum_t coeff_t phi_t` at `x`.
/// `terms` must be grouped by anchor so each pair is evaluated once.
pub(crate) fn expansion_derivatives(
    kernel: &GaussianKernel,
    anchors: &PointSet,
    terms: &[(BasisFn, f64)],
    x: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = x.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    let mut diag = vec![0.0; d];
    let mut current: Option<(usize, crate::kernel::KernelPair<'_>)> = None;
    for (f, c) in terms {
        let pair = match current {
            Some((a, p)) if a == f.point => p,
            _ => {
                let p = kernel.pair(anchors.row(f.point), x);
                current = Some((f.point, p));
                p
            }
        };
        value += c * pair.partial(f.order, f.dim, 0, 0);
        for j in 0..d {
            grad[j] += c * pair.partial(f.order, f.dim, 1, j);
            diag[j] += c * pair.partial(f.order, f.dim, 2, j);
        }
    }
    (value, grad, diag)
}
