use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assembly::{derivative_fns, expansion_derivatives, kernel_fns, BasisFn};
use super::base_measure::{BaseMeasure, BaseMeasureRecord};
use super::basis::{BasisMode, BasisSpec};
use crate::dataset::{points_from_csv_str, points_to_csv_string};
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::points::PointSet;

pub const MODEL_FORMAT: &str = "kexfam-model-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Representer solution over all derivative components of the training set.
    Full,
    /// Solution restricted to `span{d_i k(Y_a, .) : (a, i) in I}`.
    Nystrom,
    /// Solution restricted to `span{k(Y_a, .)}`.
    Lite,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::Nystrom => "nystrom",
            ModelKind::Lite => "lite",
        }
    }
}

/// `f`, `grad f` and the diagonal of the Hessian of `f` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDerivatives {
    pub value: f64,
    pub grad: Vec<f64>,
    pub second_diag: Vec<f64>,
}

/// A fitted natural parameter `f`; the model log-density is `f + log q0` up to a constant.
///
/// Coefficients are indexed point-major: for the full model `beta[a * d + i]`
/// multiplies `d_i k(X_a, .)`; for Nystrom `beta[t]` multiplies the `t`-th
/// entry of the index set (and `beta[|I| + t]` its second-order partner when
/// the basis is augmented); for lite `beta[a]` multiplies `k(Y_a, .)`.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    kind: ModelKind,
    kernel: GaussianKernel,
    lambda: f64,
    basis: BasisSpec,
    beta: Vec<f64>,
    xi_scale: f64,
    base: BaseMeasure,
    expansion: Vec<(BasisFn, f64)>,
}

impl ScoreModel {
    /// Full model `f = xi_scale * xi + sum_(a,i) beta_(a,i) d_i k(X_a, .)` on training points `x`.
    pub fn full_from_parts(
        kernel: GaussianKernel,
        lambda: f64,
        x: PointSet,
        beta: Vec<f64>,
        xi_scale: f64,
        base: BaseMeasure,
    ) -> Result<Self> {
        Error::check_dim(x.len() * x.dim(), beta.len())?;
        Self::build(
            ModelKind::Full,
            kernel,
            lambda,
            BasisSpec::all_components(x),
            beta,
            xi_scale,
            base,
        )
    }

    /// Nystrom model. Points not referenced by the index set are dropped and
    /// the index set is put in point-major order, with `beta` permuted to match.
    pub fn nystrom_from_parts(
        kernel: GaussianKernel,
        lambda: f64,
        basis: &BasisSpec,
        beta: Vec<f64>,
        base: BaseMeasure,
    ) -> Result<Self> {
        basis.validate()?;
        Error::check_dim(basis.size(), beta.len())?;
        let (compact, order) = basis.compact_with_order();
        let len = order.len();
        let mut sorted = Vec::with_capacity(beta.len());
        sorted.extend(order.iter().map(|&k| beta[k]));
        if basis.second_order {
            sorted.extend(order.iter().map(|&k| beta[len + k]));
        }
        Self::build(
            ModelKind::Nystrom,
            kernel,
            lambda,
            compact,
            sorted,
            0.0,
            base,
        )
    }

    /// Lite model `f = sum_a beta_a k(Y_a, .)`.
    pub fn lite_from_parts(
        kernel: GaussianKernel,
        lambda: f64,
        y: PointSet,
        beta: Vec<f64>,
        base: BaseMeasure,
    ) -> Result<Self> {
        Error::check_dim(y.len(), beta.len())?;
        let basis = BasisSpec {
            mode: BasisMode::Explicit,
            points: y,
            index_set: Vec::new(),
            seed: None,
            second_order: false,
        };
        Self::build(ModelKind::Lite, kernel, lambda, basis, beta, 0.0, base)
    }

    fn build(
        kind: ModelKind,
        kernel: GaussianKernel,
        lambda: f64,
        basis: BasisSpec,
        beta: Vec<f64>,
        xi_scale: f64,
        base: BaseMeasure,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) || !xi_scale.is_finite() {
            return Err(Error::Numerical {
                message: "model coefficients are not finite".into(),
                condition: None,
            });
        }
        let mut expansion: Vec<(BasisFn, f64)> = match kind {
            ModelKind::Lite => kernel_fns(basis.points.len())
                .into_iter()
                .zip(beta.iter().copied())
                .collect(),
            ModelKind::Nystrom => derivative_fns(&basis.index_set, basis.second_order)
                .into_iter()
                .zip(beta.iter().copied())
                .collect(),
            ModelKind::Full => {
                let x = &basis.points;
                let d = x.dim();
                let n = x.len() as f64;
                let g = base.log_grad_rows(x.as_slice(), d)?;
                let mut terms = Vec::with_capacity(2 * beta.len());
                for (t, &(a, i)) in basis.index_set.iter().enumerate() {
                    let coeff = beta[t] + xi_scale * g[a * d + i] / n;
                    terms.push((
                        BasisFn {
                            point: a,
                            dim: i,
                            order: 1,
                        },
                        coeff,
                    ));
                    if xi_scale != 0.0 {
                        terms.push((
                            BasisFn {
                                point: a,
                                dim: i,
                                order: 2,
                            },
                            xi_scale / n,
                        ));
                    }
                }
                terms
            }
        };
        expansion.sort_by_key(|(f, _)| f.point);
        Ok(Self {
            kind,
            kernel,
            lambda,
            basis,
            beta,
            xi_scale,
            base,
            expansion,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn kernel(&self) -> GaussianKernel {
        self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.basis.points.dim()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Coefficient on `xi` (full model only, `-1 / lambda` after fitting).
    pub fn xi_scale(&self) -> f64 {
        self.xi_scale
    }

    pub fn base_measure(&self) -> &BaseMeasure {
        &self.base
    }

    /// Points the model keeps: training set (full) or retained basis points.
    pub fn points(&self) -> &PointSet {
        &self.basis.points
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn derivatives(&self, x: &[f64]) -> Result<FieldDerivatives> {
        Error::check_dim(self.dim(), x.len())?;
        let (value, grad, second_diag) =
            expansion_derivatives(&self.kernel, &self.basis.points, &self.expansion, x);
        Ok(FieldDerivatives {
            value,
            grad,
            second_diag,
        })
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        Ok(self.derivatives(x)?.value)
    }

    /// `grad f(x)`, without the base-measure term.
    pub fn eval_grad_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.derivatives(x)?.grad)
    }

    /// Model score `grad f(x) + grad log q0(x)`.
    pub fn eval_score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.eval_grad_f(x)?;
        if !self.base.is_uniform() {
            for (s, g) in s.iter_mut().zip(self.base.log_grad(x)?) {
                *s += g;
            }
        }
        Ok(s)
    }

    /// `d_i^2 f(x)` for each `i`.
    pub fn eval_second_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.derivatives(x)?.second_diag)
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ModelRecord {
            format: MODEL_FORMAT.to_string(),
            kind: self.kind,
            sigma: self.kernel.sigma(),
            lambda: self.lambda,
            basis: BasisRecord {
                mode: self.basis.mode.clone(),
                seed: self.basis.seed,
                second_order: self.basis.second_order,
                points: points_to_csv_string(&self.basis.points)?,
                index_set: self.basis.index_set.clone(),
            },
            beta: self.beta.clone(),
            xi_scale: self.xi_scale,
            base_measure: self.base.to_record()?,
        };
        let mut s = serde_json::to_string_pretty(&record)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ModelRecord = serde_json::from_str(text)?;
        if r.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format {:?}, expected {MODEL_FORMAT:?}",
                r.format
            )));
        }
        let kernel = GaussianKernel::new(r.sigma)?;
        let points = points_from_csv_str(&r.basis.points)?;
        let base = BaseMeasure::from(r.base_measure);
        match r.kind {
            ModelKind::Full => {
                let model =
                    Self::full_from_parts(kernel, r.lambda, points, r.beta, r.xi_scale, base)?;
                Ok(model)
            }
            ModelKind::Nystrom => {
                let basis = BasisSpec {
                    mode: r.basis.mode,
                    points,
                    index_set: r.basis.index_set,
                    seed: r.basis.seed,
                    second_order: r.basis.second_order,
                };
                basis.validate()?;
                Error::check_dim(basis.size(), r.beta.len())?;
                if basis.referenced_points() != basis.points.len() {
                    return Err(Error::Format(
                        "model stores unreferenced basis points".into(),
                    ));
                }
                Self::build(
                    ModelKind::Nystrom,
                    kernel,
                    r.lambda,
                    basis,
                    r.beta,
                    0.0,
                    base,
                )
            }
            ModelKind::Lite => {
                let mut model = Self::lite_from_parts(kernel, r.lambda, points, r.beta, base)?;
                model.basis.mode = r.basis.mode;
                model.basis.seed = r.basis.seed;
                Ok(model)
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Records how the basis was chosen (mode and seed) for provenance.
    pub(crate) fn set_basis_provenance(&mut self, mode: BasisMode, seed: Option<u64>) {
        self.basis.mode = mode;
        self.basis.seed = seed;
    }
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    #[serde(flatten)]
    mode: BasisMode,
    seed: Option<u64>,
    #[serde(default)]
    second_order: bool,
    /// CSV text, header `x1,...,xd`.
    points: String,
    index_set: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format: String,
    kind: ModelKind,
    sigma: f64,
    lambda: f64,
    basis: BasisRecord,
    beta: Vec<f64>,
    xi_scale: f64,
    base_measure: BaseMeasureRecord,
}
