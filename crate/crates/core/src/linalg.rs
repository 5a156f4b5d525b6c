//! Dense symmetric solves used by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Result of a pseudo-inverse solve `x = A^+ b` for symmetric `A`.
#[derive(Debug, Clone)]
pub struct PinvSolution {
    pub x: DVector<f64>,
    /// Number of eigenvalues kept.
    pub rank: usize,
    /// `b` projected onto the kept eigenspace.
    pub projected_rhs: DVector<f64>,
    /// Largest over smallest kept absolute eigenvalue.
    pub condition: f64,
}

/// Solves `A x = b` in the least-squares minimum-norm sense via a symmetric
/// eigendecomposition. Only the lower triangle of `a` is trusted; it is
/// symmetrized first.
pub fn symmetric_pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<PinvSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: "system contains non-finite entries".into(),
            condition: None,
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or_else(|| Error::Numerical {
        message: "symmetric eigendecomposition did not converge".into(),
        condition: None,
    })?;
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = PINV_RELATIVE_CUTOFF * largest;
    let coeffs = eig.eigenvectors.tr_mul(b);
    let mut x = DVector::zeros(n);
    let mut projected = DVector::zeros(n);
    let mut rank = 0;
    let mut smallest = f64::INFINITY;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == 0.0 {
            continue;
        }
        rank += 1;
        smallest = smallest.min(lambda.abs());
        let v = eig.eigenvectors.column(k);
        x.axpy(coeffs[k] / lambda, &v, 1.0);
        projected.axpy(coeffs[k], &v, 1.0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: "pseudo-inverse produced non-finite coefficients".into(),
            condition: Some(largest / smallest),
        });
    }
    Ok(PinvSolution {
        x,
        rank,
        projected_rhs: projected,
        condition: if rank == 0 {
            f64::INFINITY
        } else {
            largest / smallest
        },
    })
}

/// Cholesky is trusted only while this lower bound on the condition number
/// stays far below `1 / PINV_RELATIVE_CUTOFF`.
const CHOLESKY_CONDITION_LIMIT: f64 = 1e6;

/// Same result as [`symmetric_pinv_solve`], taking a Cholesky shortcut when
/// `A` is clearly positive definite and well conditioned (no eigenvalue
/// would be cut, so `A^+ = A^-1`). The reported condition is then the lower
/// bound `(max L_ii / min L_ii)^2`.
pub fn symmetric_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<PinvSolution> {
    let n = a.nrows();
    if a.ncols() == n && b.len() == n && a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        let sym = (a + a.transpose()) * 0.5;
        if let Some(chol) = sym.cholesky() {
            let diag = chol.l_dirty().diagonal();
            let hi = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let lo = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            let bound = (hi / lo).powi(2);
            if bound < CHOLESKY_CONDITION_LIMIT {
                let x = chol.solve(b);
                if x.iter().all(|v| v.is_finite()) {
                    return Ok(PinvSolution {
                        x,
                        rank: n,
                        projected_rhs: b.clone(),
                        condition: bound,
                    });
                }
            }
        }
    }
    symmetric_pinv_solve(a, b)
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: "system contains non-finite entries".into(),
            condition: None,
        });
    }
    let diag_max = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag_min = a
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let chol = a.cholesky().ok_or_else(|| Error::Numerical {
        message: "matrix is not numerically positive definite".into(),
        condition: Some(diag_max / diag_min),
    })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: "Cholesky solve produced non-finite values".into(),
            condition: Some(diag_max / diag_min),
        });
    }
    Ok(x)
}

/// `|r| / |b|`, or `|r|` when `b` vanishes.
pub fn relative_residual(residual: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    let denom = rhs.norm();
    if denom > 0.0 {
        residual.norm() / denom
    } else {
        residual.norm()
    }
}
