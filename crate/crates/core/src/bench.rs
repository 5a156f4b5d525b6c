//! Seeded experiment pipelines: Fisher distance against dimension, basis size
//! and estimator, with per-configuration tuning and wall-clock timings.
//!
//! Every cell draws fresh train, validation and test sets from the analytic
//! density, tunes `(sigma, lambda)` by [`grid_search`] on the validation set,
//! refits at the selected values and reports the Fisher distance on the test
//! set. All work is sequential on the calling thread, so timings follow a
//! single-thread protocol.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{GridOptions, GridParams, RingParams, SyntheticDensity};
use crate::error::{Error, Result};
use crate::estimator::{
    fit_full, fit_lite, fit_nystrom, make_basis, BaseMeasure, BasisRequest, FitReport, FullOptions,
    LiteOptions, NystromOptions, ScoreModel,
};
use crate::kernel::GaussianKernel;
use crate::objective::{
    default_lambda_grid, default_sigma_grid, fisher_divergence, grid_search, median_heuristic,
    Criterion, GridSearchConfig, Split,
};
use crate::points::PointSet;
use crate::rng::derive_seed;

/// Estimators compared by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Full,
    /// All components of `m` random points.
    Nystrom,
    /// `m * d` components drawn from all `n * d`.
    NystromD,
    /// Kernel functions at `m` random points.
    Lite,
}

impl EstimatorTag {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::Full => "full",
            EstimatorTag::Nystrom => "nystrom",
            EstimatorTag::NystromD => "nystrom_d",
            EstimatorTag::Lite => "lite",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

/// Benchmark densities. Grid vertices are drawn per dimension from the
/// master seed and shared by all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    Ring {
        #[serde(default)]
        params: RingParams,
    },
    Grid {
        #[serde(default)]
        options: GridOptions,
    },
    Gaussian {
        #[serde(default = "unit")]
        std: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Ring { .. } => "ring",
            DatasetKind::Grid { .. } => "grid",
            DatasetKind::Gaussian { .. } => "gaussian",
        }
    }

    pub fn density(&self, dim: usize, seed: u64) -> Result<SyntheticDensity> {
        match self {
            DatasetKind::Ring { params } => {
                if dim < 2 {
                    return Err(Error::invalid("ring needs d >= 2"));
                }
                Ok(SyntheticDensity::Ring {
                    params: params.clone(),
                    dim,
                })
            }
            DatasetKind::Grid { options } => Ok(SyntheticDensity::Grid(GridParams::random(
                dim,
                options,
                derive_seed(seed, &[0x67726964, dim as u64]),
            )?)),
            DatasetKind::Gaussian { std } => Ok(SyntheticDensity::Gaussian { dim, std: *std }),
        }
    }
}

/// How each cell chooses `(sigma, lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub n_validation: usize,
    pub criterion: Criterion,
    /// Multipliers of the median heuristic; `None` means `2^-3..2^3`.
    #[serde(default)]
    pub sigma_factors: Option<Vec<f64>>,
    /// `None` means `10^-6..10^0`.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            n_validation: 500,
            criterion: Criterion::Fisher,
            sigma_factors: None,
            lambda_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub dataset: DatasetKind,
    pub dims: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub estimators: Vec<EstimatorTag>,
    /// Basis sizes; ignored by `full`.
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tuning: TuningConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingConfig {
    pub dataset: DatasetKind,
    pub dim: usize,
    pub n: usize,
    pub n_test: usize,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tuning: TuningConfig,
}

/// One benchmark cell with everything needed to rerun it in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub dim: usize,
    pub n_train: usize,
    pub estimator: EstimatorTag,
    /// Basis points requested (`n` for full).
    pub m: usize,
    /// Number of basis components `|I|` (`n d` for full).
    pub index_count: usize,
    /// Distinct training points anchoring the basis.
    pub retained_points: usize,
    pub trial: usize,
    pub data_seed: u64,
    pub basis_seed: u64,
    pub sigma: f64,
    pub lambda: f64,
    pub fisher: f64,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
    pub status: String,
}

/// Fits one estimator; `m` is ignored for `full`.
pub fn fit_estimator(
    tag: EstimatorTag,
    train: &PointSet,
    kernel: GaussianKernel,
    lambda: f64,
    m: usize,
    basis_seed: u64,
) -> Result<(ScoreModel, FitReport)> {
    let base = BaseMeasure::Uniform;
    match tag {
        EstimatorTag::Full => fit_full(train, kernel, lambda, base, &FullOptions::default()),
        EstimatorTag::Nystrom | EstimatorTag::NystromD => {
            let request = if tag == EstimatorTag::Nystrom {
                BasisRequest::AllComponents { m }
            } else {
                BasisRequest::Global {
                    count: m * train.dim(),
                }
            };
            let basis = make_basis(train, &request, basis_seed)?;
            fit_nystrom(
                train,
                &basis,
                kernel,
                lambda,
                base,
                &NystromOptions::default(),
            )
        }
        EstimatorTag::Lite => {
            let basis = make_basis(train, &BasisRequest::AllComponents { m }, basis_seed)?;
            fit_lite(
                train,
                &basis.points,
                kernel,
                lambda,
                base,
                &LiteOptions::default(),
            )
        }
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::invalid(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

fn concat(a: &PointSet, b: &PointSet) -> PointSet {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    PointSet::new(data, a.dim()).expect("both point sets are finite with equal dimension")
}

struct CellInput<'a> {
    density: &'a SyntheticDensity,
    train: &'a PointSet,
    validation: &'a PointSet,
    test: &'a PointSet,
    tuning: &'a TuningConfig,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    input: &CellInput<'_>,
    dataset: &str,
    tag: EstimatorTag,
    m: usize,
    trial: usize,
    data_seed: u64,
    basis_seed: u64,
) -> BenchRow {
    let n = input.train.len();
    let d = input.train.dim();
    let mut row = BenchRow {
        dataset: dataset.to_string(),
        dim: d,
        n_train: n,
        estimator: tag,
        m,
        index_count: 0,
        retained_points: 0,
        trial,
        data_seed,
        basis_seed,
        sigma: f64::NAN,
        lambda: f64::NAN,
        fisher: f64::NAN,
        fit_seconds: f64::NAN,
        eval_seconds: f64::NAN,
        status: "ok".into(),
    };
    let outcome = (|| -> Result<()> {
        let median = median_heuristic(input.train, 1000)?;
        let sigma_grid = match &input.tuning.sigma_factors {
            Some(f) => f.iter().map(|k| k * median).collect(),
            None => default_sigma_grid(median),
        };
        let lambda_grid = input
            .tuning
            .lambda_grid
            .clone()
            .unwrap_or_else(default_lambda_grid);
        let all = concat(input.train, input.validation);
        let config = GridSearchConfig {
            sigma_grid,
            lambda_grid,
            criterion: input.tuning.criterion,
            split: Split::holdout(n, all.len())?,
        };
        let fitter = |x: &PointSet, k: GaussianKernel, l: f64| {
            fit_estimator(tag, x, k, l, m, basis_seed).map(|(model, _)| model)
        };
        let search = grid_search(&fitter, &all, &config, Some(input.density))?;
        row.sigma = search.best_sigma;
        row.lambda = search.best_lambda;

        let start = Instant::now();
        let (model, _) = fit_estimator(
            tag,
            input.train,
            GaussianKernel::new(search.best_sigma)?,
            search.best_lambda,
            m,
            basis_seed,
        )?;
        row.fit_seconds = start.elapsed().as_secs_f64();
        row.index_count = match tag {
            EstimatorTag::Lite => model.basis().points.len(),
            _ => model.basis().index_set.len(),
        };
        row.retained_points = model.basis().points.len();

        let start = Instant::now();
        row.fisher = fisher_divergence(&model, input.test, input.density)?;
        row.eval_seconds = start.elapsed().as_secs_f64();
        Ok(())
    })();
    if let Err(e) = outcome {
        row.status = format!("failed: {e}");
    }
    row
}

/// Fisher distance per `(dim, estimator, m, trial)` on fresh test points.
///
/// Trial `t` at dimension `d` draws its data from
/// `derive_seed(seed, [d, t])`, so every estimator sees the same data.
pub fn convergence_sweep(config: &ConvergenceConfig) -> Result<Vec<BenchRow>> {
    check_positive("n_train", config.n_train)?;
    check_positive("n_test", config.n_test)?;
    check_positive("trials", config.trials)?;
    check_positive("n_validation", config.tuning.n_validation)?;
    if config.dims.is_empty() || config.estimators.is_empty() {
        return Err(Error::invalid("dims and estimators must be nonempty"));
    }
    let needs_m = config.estimators.iter().any(|e| *e != EstimatorTag::Full);
    if needs_m && (config.m_values.is_empty() || config.m_values.contains(&0)) {
        return Err(Error::invalid("m_values must be nonempty and positive"));
    }
    let mut rows = Vec::new();
    for &dim in &config.dims {
        check_positive("dim", dim)?;
        let density = config.dataset.density(dim, config.seed)?;
        for trial in 0..config.trials {
            let data_seed = derive_seed(config.seed, &[dim as u64, trial as u64]);
            let train = density.sample(config.n_train, derive_seed(data_seed, &[0]))?;
            let validation =
                density.sample(config.tuning.n_validation, derive_seed(data_seed, &[1]))?;
            let test = density.sample(config.n_test, derive_seed(data_seed, &[2]))?;
            let input = CellInput {
                density: &density,
                train: &train.points,
                validation: &validation.points,
                test: &test.points,
                tuning: &config.tuning,
            };
            for &tag in &config.estimators {
                let ms: Vec<usize> = if tag == EstimatorTag::Full {
                    vec![config.n_train]
                } else {
                    config.m_values.clone()
                };
                for m in ms {
                    let basis_seed = derive_seed(data_seed, &[3, tag.code(), m as u64]);
                    rows.push(run_cell(
                        &input,
                        config.dataset.name(),
                        tag,
                        m,
                        trial,
                        data_seed,
                        basis_seed,
                    ));
                }
            }
        }
    }
    Ok(rows)
}

/// Nystrom over all components of `m` points against Nystrom over `m d`
/// globally sampled components, on identical data.
pub fn subsampling_compare(config: &SubsamplingConfig) -> Result<Vec<BenchRow>> {
    convergence_sweep(&ConvergenceConfig {
        dataset: config.dataset.clone(),
        dims: vec![config.dim],
        n_train: config.n,
        n_test: config.n_test,
        estimators: vec![EstimatorTag::Nystrom, EstimatorTag::NystromD],
        m_values: config.m_values.clone(),
        trials: config.trials,
        seed: config.seed,
        tuning: config.tuning.clone(),
    })
}

pub const BENCH_CSV_HEADER: &str = "dataset,dim,n_train,estimator,m,index_count,retained_points,trial,data_seed,basis_seed,sigma,lambda,fisher,fit_seconds,eval_seconds,status";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.dim,
            r.n_train,
            r.estimator.name(),
            r.m,
            r.index_count,
            r.retained_points,
            r.trial,
            r.data_seed,
            r.basis_seed,
            r.sigma,
            r.lambda,
            r.fisher,
            r.fit_seconds,
            r.eval_seconds,
            r.status.replace([',', '\n', '"'], " ")
        ));
    }
    out
}

/// Config echo written next to every table.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub library: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub conventions: Conventions,
    pub config: &'a C,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Conventions {
    /// Fisher distances include the factor 1/2.
    pub half_factor: bool,
    pub threads: usize,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(seed: u64, config: &'a C) -> Self {
        Self {
            library: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            conventions: Conventions {
                half_factor: true,
                threads: 1,
            },
            config,
        }
    }
}

/// Writes `rows` as CSV to `path` and the manifest to `path` with extension `manifest.json`.
pub fn write_table<C: Serialize>(
    rows: &[BenchRow],
    manifest: &Manifest<'_, C>,
    path: &Path,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(rows_to_csv(rows).as_bytes())?;
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path.with_extension("manifest.json"), text + "\n")?;
    Ok(())
}
