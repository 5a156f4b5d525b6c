//! The `kexfam` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage error. Failures
//! print `{"error": {"kind": ..., "message": ...}}` on stderr. Every command
//! that draws random numbers requires `--seed`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{
    self, convergence_sweep, subsampling_compare, BenchRow, ConvergenceConfig, DatasetKind,
    Manifest, SubsamplingConfig,
};
use crate::dataset::{
    sample_gaussian, sample_grid, sample_ring, Dataset, GaussianParams, GridOptions, RingParams,
};
use crate::error::Error;
use crate::estimator::{
    fit_full, fit_lite, fit_nystrom, make_basis, BaseMeasure, BasisRequest, FitReport, FullOptions,
    LiteOptions, LiteRegularizer, NystromOptions, ScoreModel, DEFAULT_JITTER, DEFAULT_MAX_SYSTEM,
};
use crate::hmc::{acceptance_experiment, write_acceptance_csv, HmcConfig};
use crate::kernel::GaussianKernel;
use crate::objective::{
    default_lambda_grid, default_sigma_grid, fisher_divergence, grid_search, j_hat,
    median_heuristic, Criterion, FnScore, GridSearchConfig, GridSearchResult, ScoreFunction, Split,
};
use crate::points::PointSet;
use crate::rng::derive_seed;

#[derive(Debug, Parser)]
#[command(
    name = "kexfam",
    version,
    about = "Kernel exponential family score matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic dataset to CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Fit a model and write it with a fit report.
    Fit(FitArgs),
    /// Print the score-matching loss and Fisher distance of a model on a dataset.
    Eval(EvalArgs),
    /// Run a benchmark sweep described by a JSON manifest.
    Bench(ManifestArgs),
    /// Run a surrogate HMC acceptance experiment described by a JSON manifest.
    Hmc(ManifestArgs),
    /// Grid-search (sigma, lambda) on a validation split and write the score table.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Ring,
    Grid,
    Gaussian,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    kind: GeneratorKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    /// Ring radii.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    radial_std: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Grid hypercube side length.
    #[arg(long)]
    side: Option<f64>,
    #[arg(long)]
    component_std: Option<f64>,
    /// Gaussian standard deviation.
    #[arg(long)]
    std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Full,
    Nystrom,
    NystromD,
    Lite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    JHat,
    Fisher,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LiteRegArg {
    Rkhs,
    RkhsPlusL2,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Basis points for nystrom and lite; nystrom-d uses `m * d` components.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pseudo-inverse jitter (nystrom default 1e-5, lite default 0).
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_enum, default_value = "rkhs-plus-l2")]
    lite_regularizer: LiteRegArg,
    /// Full solver size cap on `n * d`.
    #[arg(long, default_value_t = DEFAULT_MAX_SYSTEM)]
    max_system: usize,
    /// Ignore the full solver size cap.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Bandwidths; defaults to 2^-3..2^3 times the median heuristic.
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Defaults to 1e-6..1e0.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "j-hat")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = 0.25)]
    validation_fraction: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Choose sigma and lambda by grid search, then refit on all data.
    #[arg(long)]
    tune: bool,
    #[command(flatten)]
    grid: GridArgs,
    /// Model output path.
    #[arg(short, long)]
    output: PathBuf,
    /// Fit report path; defaults to the model path with extension `report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Grid-search table path with `--tune`; defaults to extension `grid.csv`.
    #[arg(long)]
    grid_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Grid-search table path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Evaluation dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Require the Fisher distance; fails if the dataset has no analytic score.
    #[arg(long)]
    fisher: bool,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV; the manifest echo goes next to it.
    #[arg(short, long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
}

/// Runs the command line on the process arguments and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", e.render().to_string().trim());
            return 2;
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => run_bench(a),
        Command::Hmc(a) => run_hmc(a),
        Command::Tune(a) => tune(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            report_error("usage", &msg);
            2
        }
        Err(Failure::Runtime(e)) => {
            report_error(e.kind(), &e.to_string());
            1
        }
    }
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    if a.n == 0 || a.d == 0 {
        return Err(usage("--n and --d must be positive"));
    }
    let result = match a.kind {
        GeneratorKind::Ring => {
            if a.d < 2 {
                return Err(usage("ring needs --d >= 2"));
            }
            let mut p = RingParams::default();
            if let Some(r) = a.radii {
                p.radii = r;
            }
            if let Some(s) = a.radial_std {
                p.radial_std = s;
            }
            if let Some(s) = a.noise_std {
                p.noise_std = s;
            }
            sample_ring(a.n, a.d, &p, a.seed)
        }
        GeneratorKind::Grid => {
            let mut o = GridOptions::default();
            if let Some(s) = a.side {
                o.side = s;
            }
            if let Some(s) = a.component_std {
                o.component_std = s;
            }
            sample_grid(a.n, a.d, &o, a.seed)
        }
        GeneratorKind::Gaussian => {
            let std = a.std.unwrap_or(1.0);
            sample_gaussian(a.n, a.d, GaussianParams { std }, a.seed)
        }
    };
    // parameters come straight from the arguments
    let data = result.map_err(|e| match e {
        Error::InvalidInput(m) => Failure::Usage(m),
        e => Failure::Runtime(e),
    })?;
    data.save(&a.output)?;
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(usage(format!("dataset {} not found", path.display())));
    }
    Ok(Dataset::load(path)?)
}

fn needs_seed(est: &EstimatorArgs, tuning: bool) -> CliResult<Option<u64>> {
    if (est.estimator != EstimatorArg::Full || tuning) && est.seed.is_none() {
        return Err(usage(
            "--seed is required for subsampled estimators and tuning",
        ));
    }
    Ok(est.seed)
}

/// Fits the configured estimator; the basis is drawn from `basis_seed`.
fn fit_with(
    est: &EstimatorArgs,
    x: &PointSet,
    kernel: GaussianKernel,
    lambda: f64,
    basis_seed: u64,
) -> crate::Result<(ScoreModel, FitReport)> {
    let base = BaseMeasure::Uniform;
    let m = est.m.unwrap_or(0);
    match est.estimator {
        EstimatorArg::Full => fit_full(
            x,
            kernel,
            lambda,
            base,
            &FullOptions {
                max_system: est.max_system,
                force: est.force,
            },
        ),
        EstimatorArg::Nystrom | EstimatorArg::NystromD => {
            let request = if est.estimator == EstimatorArg::Nystrom {
                BasisRequest::AllComponents { m }
            } else {
                BasisRequest::Global { count: m * x.dim() }
            };
            let basis = make_basis(x, &request, basis_seed)?;
            let opts = NystromOptions {
                jitter: est.jitter.unwrap_or(DEFAULT_JITTER),
            };
            fit_nystrom(x, &basis, kernel, lambda, base, &opts)
        }
        EstimatorArg::Lite => {
            let basis = make_basis(x, &BasisRequest::AllComponents { m }, basis_seed)?;
            let opts = LiteOptions {
                regularizer: match est.lite_regularizer {
                    LiteRegArg::Rkhs => LiteRegularizer::RkhsNorm,
                    LiteRegArg::RkhsPlusL2 => LiteRegularizer::RkhsPlusL2,
                },
                jitter: est.jitter.unwrap_or(0.0),
            };
            fit_lite(x, &basis.points, kernel, lambda, base, &opts)
        }
    }
}

fn check_estimator_args(est: &EstimatorArgs) -> CliResult<()> {
    if est.estimator != EstimatorArg::Full && est.m.is_none_or(|m| m == 0) {
        return Err(usage(
            "--m must be a positive integer for nystrom, nystrom-d and lite",
        ));
    }
    Ok(())
}

fn run_search(
    est: &EstimatorArgs,
    grid: &GridArgs,
    data: &Dataset,
    seed: u64,
) -> CliResult<GridSearchResult> {
    let n = data.len();
    if !(grid.validation_fraction > 0.0 && grid.validation_fraction < 1.0) {
        return Err(usage("--validation-fraction must lie in (0, 1)"));
    }
    let n_val = ((n as f64) * grid.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(usage(
            "dataset too small for the requested validation split",
        ));
    }
    let split = Split::random(n, n_val, derive_seed(seed, &[0x73706c6974]))?;
    let train = data.points.select(&split.train);
    let sigma_grid = match &grid.sigma_grid {
        Some(g) => g.clone(),
        None => default_sigma_grid(median_heuristic(&train, 1000)?),
    };
    let criterion = match grid.criterion {
        CriterionArg::JHat => Criterion::JHat,
        CriterionArg::Fisher => Criterion::Fisher,
    };
    let density = data.density();
    if criterion == Criterion::Fisher && density.is_none() {
        return Err(usage(
            "the fisher criterion needs a dataset with an analytic score",
        ));
    }
    let config = GridSearchConfig {
        sigma_grid,
        lambda_grid: grid.lambda_grid.clone().unwrap_or_else(default_lambda_grid),
        criterion,
        split,
    };
    let basis_seed = derive_seed(seed, &[0x6261736973]);
    let fitter = |x: &PointSet, k: GaussianKernel, l: f64| {
        fit_with(est, x, k, l, basis_seed).map(|(model, _)| model)
    };
    let truth = density.as_ref().map(|d| d as &dyn ScoreFunction);
    Ok(grid_search(&fitter, &data.points, &config, truth)?)
}

fn fit(a: FitArgs) -> CliResult<()> {
    check_estimator_args(&a.est)?;
    let seed = needs_seed(&a.est, a.tune)?;
    let data = load_dataset(&a.est.data)?;
    let mut tuned = None;
    let (sigma, lambda) = if a.tune {
        let seed = seed.expect("checked by needs_seed");
        let search = run_search(&a.est, &a.grid, &data, seed)?;
        let grid_path = a
            .grid_csv
            .clone()
            .unwrap_or_else(|| a.output.with_extension("grid.csv"));
        search.write_csv(&grid_path)?;
        tuned = Some(json!({
            "criterion": criterion_name(a.grid.criterion),
            "value": search.best_value,
            "table": grid_path,
        }));
        (search.best_sigma, search.best_lambda)
    } else {
        match (a.sigma, a.lambda) {
            (Some(s), Some(l)) => (s, l),
            _ => return Err(usage("give --sigma and --lambda, or --tune")),
        }
    };
    let kernel = GaussianKernel::new(sigma).map_err(|e| usage(e.to_string()))?;
    let basis_seed = derive_seed(seed.unwrap_or(0), &[0x6261736973]);
    let (model, report) = fit_with(&a.est, &data.points, kernel, lambda, basis_seed)?;
    model.save(&a.output)?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.output.with_extension("report.json"));
    let doc = json!({
        "sigma": sigma,
        "lambda": lambda,
        "seed": seed,
        "m": a.est.m,
        "n_train": data.len(),
        "tuning": tuned,
        "report": report,
    });
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&doc).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    Ok(())
}

fn criterion_name(c: CriterionArg) -> &'static str {
    match c {
        CriterionArg::JHat => "j_hat",
        CriterionArg::Fisher => "fisher",
    }
}

fn tune(a: TuneArgs) -> CliResult<()> {
    check_estimator_args(&a.est)?;
    let seed = needs_seed(&a.est, true)?.expect("tuning requires a seed");
    let data = load_dataset(&a.est.data)?;
    let search = run_search(&a.est, &a.grid, &data, seed)?;
    search.write_csv(&a.output)?;
    println!(
        "{}",
        json!({
            "sigma": search.best_sigma,
            "lambda": search.best_lambda,
            "criterion": criterion_name(a.grid.criterion),
            "value": search.best_value,
        })
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    if !a.model.exists() {
        return Err(usage(format!("model {} not found", a.model.display())));
    }
    let model = ScoreModel::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    if data.dim() != model.dim() {
        return Err(Failure::Runtime(Error::DimensionMismatch {
            expected: model.dim(),
            found: data.dim(),
        }));
    }
    let fisher = match data.density() {
        Some(density) => Some(fisher_divergence(&model, &data.points, &density)?),
        None if a.fisher => {
            return Err(usage(format!(
                "dataset generator '{}' has no analytic score",
                data.generator.name()
            )))
        }
        None => None,
    };
    let j = j_hat(&model, &data.points)?;
    println!(
        "{}",
        json!({
            "fisher": fisher,
            "j_hat": j,
            "n_test": data.len(),
            "conventions": {"half_factor": true},
        })
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
enum BenchManifest {
    Convergence(ConvergenceConfig),
    Subsampling(SubsamplingConfig),
}

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad manifest {}: {e}", path.display())))
}

fn all_failed(statuses: impl Iterator<Item = bool>) -> bool {
    let mut any = false;
    for ok in statuses {
        if ok {
            return false;
        }
        any = true;
    }
    any
}

fn run_bench(a: ManifestArgs) -> CliResult<()> {
    let manifest: BenchManifest = read_manifest(&a.manifest)?;
    let (rows, seed): (Vec<BenchRow>, u64) = match &manifest {
        BenchManifest::Convergence(c) => (convergence_sweep(c)?, c.seed),
        BenchManifest::Subsampling(c) => (subsampling_compare(c)?, c.seed),
    };
    bench::write_table(&rows, &Manifest::new(seed, &manifest), &a.output)?;
    if all_failed(rows.iter().map(|r| r.status == "ok")) {
        return Err(Failure::Runtime(Error::Search(
            "every benchmark cell failed".into(),
        )));
    }
    Ok(())
}

/// Where an HMC experiment gets each model's score.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum ModelSource {
    /// The target's analytic score.
    Exact,
    /// A score of zero everywhere.
    Zero,
    /// A saved model, resolved relative to the manifest.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HmcModelSpec {
    id: String,
    #[serde(flatten)]
    source: ModelSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HmcManifest {
    target: DatasetKind,
    dim: usize,
    models: Vec<HmcModelSpec>,
    /// Starting points drawn from the target.
    n_starts: usize,
    repetitions: usize,
    #[serde(default = "default_steps")]
    num_steps: usize,
    #[serde(default = "default_step_size")]
    step_size: f64,
    seed: u64,
}

fn default_steps() -> usize {
    100
}

fn default_step_size() -> f64 {
    0.1
}

fn run_hmc(a: ManifestArgs) -> CliResult<()> {
    let manifest: HmcManifest = read_manifest(&a.manifest)?;
    if manifest.models.is_empty() || manifest.n_starts == 0 || manifest.repetitions == 0 {
        return Err(usage(
            "hmc manifest needs models, n_starts > 0 and repetitions > 0",
        ));
    }
    let density = manifest
        .target
        .density(manifest.dim, manifest.seed)
        .map_err(|e| usage(e.to_string()))?;
    let base_dir = a.manifest.parent().unwrap_or(Path::new("."));
    let mut loaded: Vec<Box<dyn ScoreFunction>> = Vec::new();
    for spec in &manifest.models {
        let score: Box<dyn ScoreFunction> = match &spec.source {
            ModelSource::Exact => Box::new(density.clone()),
            ModelSource::Zero => Box::new(FnScore(|x: &[f64]| vec![0.0; x.len()])),
            ModelSource::File { path } => {
                let model = ScoreModel::load(&base_dir.join(path))?;
                if model.dim() != manifest.dim {
                    return Err(Failure::Runtime(Error::DimensionMismatch {
                        expected: manifest.dim,
                        found: model.dim(),
                    }));
                }
                Box::new(model)
            }
        };
        loaded.push(score);
    }
    let models: Vec<(String, &dyn ScoreFunction)> = manifest
        .models
        .iter()
        .zip(&loaded)
        .map(|(s, m)| (s.id.clone(), m.as_ref()))
        .collect();
    let starts: Vec<Vec<f64>> = density
        .sample(
            manifest.n_starts,
            derive_seed(manifest.seed, &[0x7374617274]),
        )?
        .points
        .rows()
        .map(<[f64]>::to_vec)
        .collect();
    let config = HmcConfig {
        num_steps: manifest.num_steps,
        step_size: manifest.step_size,
        seed: manifest.seed,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let logp = |x: &[f64]| density.log_density(x);
    let rows = acceptance_experiment(&models, &logp, &starts, &config, manifest.repetitions)?;
    write_acceptance_csv(&rows, &a.output)?;
    let echo = serde_json::to_string_pretty(&Manifest::new(manifest.seed, &manifest))
        .map_err(Error::from)?;
    std::fs::write(a.output.with_extension("manifest.json"), echo + "\n").map_err(Error::from)?;
    if all_failed(rows.iter().map(|r| r.status == "ok")) {
        return Err(Failure::Runtime(Error::Search(
            "every HMC run failed".into(),
        )));
    }
    Ok(())
}
