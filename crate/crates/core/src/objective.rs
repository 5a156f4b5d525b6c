//! Score-matching loss, Fisher divergence, and validation-based selection of
//! `(sigma, lambda)`.
//!
//! Conventions: [`fisher_divergence`] includes the factor 1/2,
//! `1/2 mean_x |s_model(x) - s_true(x)|^2`. [`j_hat`] drops the additive
//! constant that depends only on the data distribution and `q0`, so its
//! values are comparable across models only on a fixed evaluation set.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::SyntheticDensity;
use crate::error::{Error, Result};
use crate::estimator::ScoreModel;
use crate::kernel::GaussianKernel;
use crate::points::PointSet;
use crate::rng;

/// Anything that returns a score `grad log p(x)`.
pub trait ScoreFunction {
    fn score(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl ScoreFunction for ScoreModel {
    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval_score(x)
    }
}

impl ScoreFunction for SyntheticDensity {
    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        SyntheticDensity::score(self, x)
    }
}

/// Adapts a closure into a [`ScoreFunction`].
pub struct FnScore<F>(pub F);

impl<F: Fn(&[f64]) -> Vec<f64>> ScoreFunction for FnScore<F> {
    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}

/// Empirical score-matching loss
/// `mean_x sum_i [d_i^2 f(x) + 1/2 (d_i f(x))^2 + d_i f(x) d_i log q0(x)]`.
pub fn j_hat(model: &ScoreModel, points: &PointSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Error::check_dim(model.dim(), points.dim())?;
    let base = model.base_measure();
    let mut total = 0.0;
    for x in points.rows() {
        let dv = model.derivatives(x)?;
        let g = if base.is_uniform() {
            None
        } else {
            Some(base.log_grad(x)?)
        };
        for i in 0..x.len() {
            let gi = g.as_ref().map_or(0.0, |g| g[i]);
            total += dv.second_diag[i] + 0.5 * dv.grad[i] * dv.grad[i] + dv.grad[i] * gi;
        }
    }
    Ok(total / points.len() as f64)
}

/// `1/2 mean_x |model score(x) - true score(x)|^2`.
pub fn fisher_divergence(
    model: &dyn ScoreFunction,
    points: &PointSet,
    truth: &dyn ScoreFunction,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let mut total = 0.0;
    for (index, x) in points.rows().enumerate() {
        let truth_at = truth.score(x).map_err(|e| Error::Evaluation {
            index,
            message: format!("true score: {e}"),
        })?;
        if truth_at.len() != x.len() || truth_at.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index,
                message: "true score is not a finite vector of the right dimension".into(),
            });
        }
        let model_at = model.score(x)?;
        if model_at.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index,
                message: "model score is not finite".into(),
            });
        }
        total += model_at
            .iter()
            .zip(&truth_at)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(0.5 * total / points.len() as f64)
}

/// Median pairwise squared distance over the first `max_points` points.
/// This is the natural scale for `sigma` in `exp(-|x - y|^2 / sigma)`.
pub fn median_heuristic(points: &PointSet, max_points: usize) -> Result<f64> {
    let n = points.len().min(max_points);
    if n < 2 {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let d2: f64 = points
                .row(a)
                .iter()
                .zip(points.row(b))
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            dists.push(d2);
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(Error::invalid("median pairwise distance is zero"))
    }
}

/// `2^k * median` for `k = -3..=3`.
pub fn default_sigma_grid(median: f64) -> Vec<f64> {
    (-3..=3).map(|k| median * 2f64.powi(k)).collect()
}

/// `10^k` for `k = -6..=0`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=0).map(|k| 10f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Score-matching loss on the validation points; needs no ground truth.
    JHat,
    /// Fisher divergence against a known true score.
    Fisher,
}

/// Disjoint train/validation index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    /// First `n_train` indices for training, the rest for validation.
    pub fn holdout(n_train: usize, n_total: usize) -> Result<Self> {
        let split = Self {
            train: (0..n_train).collect(),
            validation: (n_train..n_total).collect(),
        };
        split.validate(n_total)?;
        Ok(split)
    }

    /// Random split with `n_validation` validation indices, both sides sorted.
    pub fn random(n_total: usize, n_validation: usize, seed: u64) -> Result<Self> {
        let mut idx: Vec<usize> = (0..n_total).collect();
        idx.shuffle(&mut rng::stream(seed));
        if n_validation > n_total {
            return Err(Error::invalid("validation set larger than the dataset"));
        }
        let mut validation = idx[..n_validation].to_vec();
        let mut train = idx[n_validation..].to_vec();
        validation.sort_unstable();
        train.sort_unstable();
        let split = Self { train, validation };
        split.validate(n_total)?;
        Ok(split)
    }

    pub fn validate(&self, n_total: usize) -> Result<()> {
        if self.train.is_empty() || self.validation.is_empty() {
            return Err(Error::invalid("train and validation sets must be nonempty"));
        }
        let mut seen = vec![false; n_total];
        for &i in self.train.iter().chain(&self.validation) {
            if i >= n_total || seen[i] {
                return Err(Error::invalid(format!(
                    "split index {i} out of range or used twice"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split does not cover every point"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    pub sigma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub criterion: Criterion,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sigma: f64,
    pub lambda: f64,
    /// Criterion value, `None` if the fit or evaluation failed.
    pub value: Option<f64>,
    pub fit_seconds: f64,
    /// `"ok"` or the failure message.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_sigma: f64,
    pub best_lambda: f64,
    pub best_value: f64,
    /// The model fitted at the best cell.
    pub best_model: ScoreModel,
    /// All cells, sigma-major in grid order.
    pub table: Vec<GridCell>,
}

impl GridSearchResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(table_to_csv(&self.table).as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// CSV with header `sigma,lambda,criterion_value,fit_seconds,status`.
pub fn table_to_csv(table: &[GridCell]) -> String {
    let mut out = String::from("sigma,lambda,criterion_value,fit_seconds,status\n");
    for c in table {
        let value = c.value.map_or_else(String::new, |v| format!("{v}"));
        let status = c.status.replace([',', '\n', '"'], " ");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.sigma, c.lambda, value, c.fit_seconds, status
        ));
    }
    out
}

/// Fits on the training split for every `(sigma, lambda)` and scores each
/// fit on the validation split. Failed cells are recorded and skipped; ties
/// go to the larger `lambda`, then the larger `sigma`.
pub fn grid_search(
    fitter: &dyn Fn(&PointSet, GaussianKernel, f64) -> Result<ScoreModel>,
    data: &PointSet,
    config: &GridSearchConfig,
    truth: Option<&dyn ScoreFunction>,
) -> Result<GridSearchResult> {
    if config.sigma_grid.is_empty() || config.lambda_grid.is_empty() {
        return Err(Error::invalid("hyperparameter grids must be nonempty"));
    }
    config.split.validate(data.len())?;
    if config.criterion == Criterion::Fisher && truth.is_none() {
        return Err(Error::invalid("Fisher criterion needs a true score"));
    }
    let train = data.select(&config.split.train);
    let validation = data.select(&config.split.validation);

    let mut table = Vec::with_capacity(config.sigma_grid.len() * config.lambda_grid.len());
    let mut best: Option<(f64, f64, f64, ScoreModel)> = None;
    for &sigma in &config.sigma_grid {
        for &lambda in &config.lambda_grid {
            let start = Instant::now();
            let outcome = GaussianKernel::new(sigma).and_then(|k| {
                let model = fitter(&train, k, lambda)?;
                let value = match config.criterion {
                    Criterion::JHat => j_hat(&model, &validation)?,
                    Criterion::Fisher => {
                        fisher_divergence(&model, &validation, truth.expect("checked above"))?
                    }
                };
                if value.is_finite() {
                    Ok((model, value))
                } else {
                    Err(Error::Numerical {
                        message: "criterion is not finite".into(),
                        condition: None,
                    })
                }
            });
            let fit_seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((model, value)) => {
                    table.push(GridCell {
                        sigma,
                        lambda,
                        value: Some(value),
                        fit_seconds,
                        status: "ok".into(),
                    });
                    let better = match &best {
                        None => true,
                        Some((bs, bl, bv, _)) => {
                            value < *bv
                                || (value == *bv
                                    && (lambda > *bl || (lambda == *bl && sigma > *bs)))
                        }
                    };
                    if better {
                        best = Some((sigma, lambda, value, model));
                    }
                }
                Err(e) => table.push(GridCell {
                    sigma,
                    lambda,
                    value: None,
                    fit_seconds,
                    status: format!("failed: {e}"),
                }),
            }
        }
    }
    let (best_sigma, best_lambda, best_value, best_model) =
        best.ok_or_else(|| Error::Search("every grid cell failed".into()))?;
    Ok(GridSearchResult {
        best_sigma,
        best_lambda,
        best_value,
        best_model,
        table,
    })
}
