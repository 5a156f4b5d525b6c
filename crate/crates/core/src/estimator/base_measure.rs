use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-gradient of a base measure `q0`.
pub type LogGradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Base measure `q0` of the exponential family; only `grad log q0` is ever used.
///
/// `Uniform` has zero log-gradient everywhere; no support boundary is
/// enforced when evaluating.
#[derive(Clone, Default)]
pub enum BaseMeasure {
    #[default]
    Uniform,
    /// Centred isotropic Gaussian, `grad log q0(x) = -x / std^2`.
    Gaussian { std: f64 },
    /// Arbitrary log-gradient. Models using it cannot be saved.
    Custom(LogGradFn),
}

impl fmt::Debug for BaseMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseMeasure::Uniform => f.write_str("Uniform"),
            BaseMeasure::Gaussian { std } => f.debug_struct("Gaussian").field("std", std).finish(),
            BaseMeasure::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl BaseMeasure {
    pub fn is_uniform(&self) -> bool {
        matches!(self, BaseMeasure::Uniform)
    }

    pub fn log_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = match self {
            BaseMeasure::Uniform => vec![0.0; x.len()],
            BaseMeasure::Gaussian { std } => x.iter().map(|v| -v / (std * std)).collect(),
            BaseMeasure::Custom(f) => f(x),
        };
        Error::check_dim(x.len(), g.len())?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("base measure log-gradient is not finite"));
        }
        Ok(g)
    }

    /// `grad log q0` at every row of a row-major buffer.
    pub(crate) fn log_grad_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>> {
        if self.is_uniform() {
            return Ok(vec![0.0; rows.len()]);
        }
        let mut out = Vec::with_capacity(rows.len());
        for r in rows.chunks_exact(dim) {
            out.extend(self.log_grad(r)?);
        }
        Ok(out)
    }

    pub(crate) fn to_record(&self) -> Result<BaseMeasureRecord> {
        match self {
            BaseMeasure::Uniform => Ok(BaseMeasureRecord::Uniform),
            BaseMeasure::Gaussian { std } => Ok(BaseMeasureRecord::Gaussian { std: *std }),
            BaseMeasure::Custom(_) => Err(Error::invalid(
                "models with a custom base measure cannot be serialized",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub(crate) enum BaseMeasureRecord {
    Uniform,
    Gaussian { std: f64 },
}

impl From<BaseMeasureRecord> for BaseMeasure {
    fn from(r: BaseMeasureRecord) -> Self {
        match r {
            BaseMeasureRecord::Uniform => BaseMeasure::Uniform,
            BaseMeasureRecord::Gaussian { std } => BaseMeasure::Gaussian { std },
        }
    }
}
