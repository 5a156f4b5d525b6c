//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{
    derivative_errors, kernel_fd_suite, lite_reference, optimal_objective, pointwise_objective,
    uniform_points, vec_rel_err, worst_decrease, Problem,
};
use kexfam::bench::{
    convergence_sweep, fit_estimator, BenchRow, ConvergenceConfig, DatasetKind, EstimatorTag,
    TuningConfig,
};
use kexfam::estimator::LiteSystem;
use kexfam::hmc::{acceptance_experiment, HmcConfig};
use kexfam::objective::{
    default_lambda_grid, default_sigma_grid, median_heuristic, Criterion, GridSearchConfig, Split,
};
use kexfam::rng::{derive_seed, stream};
use kexfam::{
    fit_lite, fit_nystrom, grid_search, make_basis, sample_gaussian, sample_ring, BaseMeasure,
    BasisRequest, FnScore, GaussianKernel, GaussianParams, LiteOptions, LiteRegularizer,
    NystromOptions, PointSet, RegularizedObjective, RingParams, ScoreFunction, ScoreModel,
    SyntheticDensity,
};
use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let e = kernel_fd_suite(20, 1);
    let secs = start.elapsed().as_secs_f64();
    check(
        e.grad < 1e-5
            && e.cross_hessian < 1e-5
            && e.dx_dyy < 1e-5
            && e.dxx_dyy < 1e-4
            && secs < 5.0,
        format!(
            "max rel err grad {:.1e}, cross {:.1e}, third {:.1e}, fourth {:.1e}",
            e.grad, e.cross_hessian, e.dx_dyy, e.dxx_dyy
        ),
    )
}

/// The 25 random problems shared by criteria 2, 3 and 5.
fn problems() -> Vec<Problem> {
    (0..25).map(|s| Problem::random(1000 + s)).collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (mut residual, mut decrease) = (0.0f64, f64::NEG_INFINITY);
    for (k, p) in problems().iter().enumerate() {
        let m = p.x.len().div_ceil(2);
        let seed = k as u64;

        let (full, r) = p.full();
        residual = residual.max(r.residual_norm);
        let sys = p.full_system();
        let beta = DVector::from_column_slice(full.beta());
        decrease = decrease.max(worst_decrease(&|b| sys.objective(b), &beta, seed));

        let (ny, r) = p.nystrom(m);
        residual = residual.max(r.residual_norm);
        let sys = p.nystrom_system(&ny);
        let beta = DVector::from_column_slice(ny.beta());
        let obj = |b: &DVector<f64>| sys.penalized_objective(b, r.jitter_used);
        decrease = decrease.max(worst_decrease(&obj, &beta, seed));

        let opts = LiteOptions::default();
        let (lite, r) = p.lite(m, &opts);
        residual = residual.max(r.residual_norm);
        let sys = p.lite_system(&lite, &opts);
        let beta = DVector::from_column_slice(lite.beta());
        decrease = decrease.max(worst_decrease(
            &|b| sys.penalized_objective(b, opts.jitter),
            &beta,
            seed,
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        residual < 1e-6 && decrease <= 1e-10 && secs < 30.0,
        format!("max residual {residual:.1e}, largest objective decrease {decrease:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    for p in problems() {
        let m = p.x.len().div_ceil(2);

        let (full, _) = p.full();
        let sys = p.full_system();
        let beta = DVector::from_column_slice(full.beta());
        let pw = pointwise_objective(&full, &p.x, sys.rkhs_norm_sq(&beta), 0.0);
        worst = worst.max(rel(sys.objective(&beta), pw));

        let (ny, _) = p.nystrom(m);
        let sys = p.nystrom_system(&ny);
        let beta = DVector::from_column_slice(ny.beta());
        let pw = pointwise_objective(&ny, &p.x, beta.dot(&(&sys.gram * &beta)), 0.0);
        worst = worst.max(rel(sys.objective(&beta), pw));

        let opts = LiteOptions::default();
        let (lite, _) = p.lite(m, &opts);
        let sys = p.lite_system(&lite, &opts);
        let beta = DVector::from_column_slice(lite.beta());
        let l2 = 0.5 * p.lambda * beta.norm_squared();
        let pw = pointwise_objective(&lite, &p.x, beta.dot(&(&sys.gram * &beta)), l2);
        worst = worst.max(rel(sys.objective(&beta), pw));
    }
    check(worst < 1e-8, format!("max rel diff {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let (tau, lambda, n) = (0.3, 0.1, 8);
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let x = uniform_points(n, d, 2.0, 40 + d as u64);
        let kernel = GaussianKernel::new(tau).unwrap();
        let (a, b, kmat) = lite_reference(&x, tau);
        let sys = LiteSystem::assemble(
            &x,
            &x,
            &kernel,
            lambda,
            LiteRegularizer::RkhsNorm,
            &BaseMeasure::Uniform,
        )
        .map_err(|e| e.to_string())?;
        let nf = n as f64;
        worst = worst.max(vec_rel_err(
            sys.h.as_slice(),
            (&b * (2.0 / (nf * tau))).as_slice(),
        ));
        let btb = sys.b.transpose() * &sys.b;
        worst = worst.max(vec_rel_err(
            btb.as_slice(),
            (&a * (4.0 / (tau * tau))).as_slice(),
        ));
        worst = worst.max(vec_rel_err(sys.gram.as_slice(), kmat.as_slice()));
        let opts = LiteOptions {
            regularizer: LiteRegularizer::RkhsNorm,
            jitter: 0.0,
        };
        let (model, _) = fit_lite(&x, &x, kernel, lambda, BaseMeasure::Uniform, &opts)
            .map_err(|e| e.to_string())?;
        let reg = &a + &kmat * (0.25 * nf * tau * tau * lambda);
        let expect = -(tau / 2.0) * reg.lu().solve(&b).ok_or("singular reference system")?;
        worst = worst.max(vec_rel_err(model.beta(), expect.as_slice()));
    }
    check(
        worst < 1e-8,
        format!("max rel err over h', B'B', G' and beta: {worst:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for (k, p) in problems().iter().enumerate() {
        let m = p.x.len().div_ceil(2);
        for model in [
            p.full().0,
            p.nystrom(m).0,
            p.lite(m, &LiteOptions::default()).0,
        ] {
            let (a, b) = derivative_errors(&model, k as u64);
            e1 = e1.max(a);
            e2 = e2.max(b);
        }
    }
    check(
        e1 < 1e-5 && e2 < 1e-4,
        format!("score {e1:.1e}, second diagonal {e2:.1e}"),
    )
}

fn fisher_by(rows: &[BenchRow], tag: EstimatorTag) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.estimator == tag)
        .map(|r| r.fisher)
        .collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let ring = DatasetKind::Ring {
        params: RingParams::default(),
    };
    let sweep = |n: usize, estimators: Vec<EstimatorTag>, tuning: TuningConfig| {
        convergence_sweep(&ConvergenceConfig {
            dataset: ring.clone(),
            dims: vec![2],
            n_train: n,
            n_test: 5000,
            estimators,
            m_values: vec![n],
            trials: 10,
            seed: 6,
            tuning,
        })
        .map_err(|e| e.to_string())
    };
    let mut medians = Vec::new();
    for n in [50, 200, 500] {
        let rows = sweep(n, vec![EstimatorTag::Full], TuningConfig::default())?;
        medians.push(median(fisher_by(&rows, EstimatorTag::Full)));
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);

    // the default sigma grid bottoms out at median/8, which is where the
    // ring optimum sits; the proximity check tunes on a finer grid
    let fine = TuningConfig {
        sigma_factors: Some((-12..=-2).map(|k| 2f64.powf(k as f64 / 2.0)).collect()),
        lambda_grid: Some((-10..=-2).map(|k| 10f64.powf(k as f64 / 2.0)).collect()),
        ..TuningConfig::default()
    };
    let rows = sweep(200, vec![EstimatorTag::Full, EstimatorTag::Nystrom], fine)?;
    let full = median(fisher_by(&rows, EstimatorTag::Full));
    let nys = median(fisher_by(&rows, EstimatorTag::Nystrom));
    let rel = (nys - full).abs() / full;
    let secs = start.elapsed().as_secs_f64();
    check(
        decreasing && rel < 0.25 && secs < 300.0,
        format!(
            "median Fisher at n = 50/200/500: {:.2}/{:.2}/{:.2}; n = 200 full {full:.2} vs nystrom {nys:.2} ({:.0}% apart)",
            medians[0],
            medians[1],
            medians[2],
            100.0 * rel
        ),
    )
}

fn criterion_7() -> Outcome {
    let kernel = GaussianKernel::new(2.0).unwrap();
    let best = |n: usize| -> Result<f64, String> {
        let x = sample_ring(n, 2, &RingParams::default(), n as u64)
            .map_err(|e| e.to_string())?
            .points;
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let t = Instant::now();
            fit_estimator(EstimatorTag::Nystrom, &x, kernel, 1e-3, 50, 9)
                .map_err(|e| e.to_string())?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let (small, large) = (best(500)?, best(2000)?);
    let ratio = large / small;
    check(
        ratio < 8.0,
        format!(
            "fit time {:.1} ms at n = 500, {:.1} ms at n = 2000, ratio {ratio:.2}",
            1e3 * small,
            1e3 * large
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..10 {
        let p = Problem::random(2000 + trial);
        let mut r = stream(derive_seed(8, &[trial]));
        let m = p.x.len().div_ceil(2);
        let d = p.x.dim();
        let y = make_basis(&p.x, &BasisRequest::AllComponents { m }, trial)
            .map_err(|e| e.to_string())?
            .points;
        let total = m * d;
        let big_count = r.random_range(2..=total);
        let big: Vec<usize> = index::sample(&mut r, total, big_count).into_vec();
        let small_count = r.random_range(1..big_count);
        let small: Vec<usize> = index::sample(&mut r, big_count, small_count)
            .into_iter()
            .map(|k| big[k])
            .collect();
        let to_pairs = |v: &[usize]| v.iter().map(|f| (f / d, f % d)).collect::<Vec<_>>();
        let o_big = optimal_objective(&p, &y, to_pairs(&big));
        let o_small = optimal_objective(&p, &y, to_pairs(&small));
        worst = worst.max(o_big - o_small);
    }
    check(
        worst <= 1e-10,
        format!("largest increase from enlarging I: {worst:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let err = |e: kexfam::Error| e.to_string();
    let target = SyntheticDensity::Gaussian { dim: 2, std: 1.0 };
    let logp = |x: &[f64]| target.log_density(x);
    let starts: Vec<Vec<f64>> = target
        .sample(10, 90)
        .map_err(err)?
        .points
        .rows()
        .map(<[f64]>::to_vec)
        .collect();

    let exact_cfg = HmcConfig {
        num_steps: 100,
        step_size: 0.01,
        seed: 91,
    };
    let exact = acceptance_experiment(
        &[("exact".into(), &target as &dyn ScoreFunction)],
        &logp,
        &starts,
        &exact_cfg,
        20,
    )
    .map_err(err)?;

    // 500 samples to fit, 1500 held out for tuning by the score-matching loss
    let data = sample_gaussian(2000, 2, GaussianParams { std: 1.0 }, 92).map_err(err)?;
    let med = median_heuristic(&data.points, 1000).map_err(err)?;
    let fitter = |x: &PointSet, k: GaussianKernel, l: f64| -> kexfam::Result<ScoreModel> {
        let basis = make_basis(x, &BasisRequest::AllComponents { m: 100 }, 93)?;
        Ok(fit_nystrom(
            x,
            &basis,
            k,
            l,
            BaseMeasure::Uniform,
            &NystromOptions::default(),
        )?
        .0)
    };
    let search = grid_search(
        &fitter,
        &data.points,
        &GridSearchConfig {
            sigma_grid: default_sigma_grid(med),
            lambda_grid: default_lambda_grid(),
            criterion: Criterion::JHat,
            split: Split::holdout(500, 2000).map_err(err)?,
        },
        None,
    )
    .map_err(err)?;
    let zero = FnScore(|x: &[f64]| vec![0.0; x.len()]);
    let cfg = HmcConfig::new(94);
    let rows = acceptance_experiment(
        &[
            ("nystrom".into(), &search.best_model as &dyn ScoreFunction),
            ("zero".into(), &zero),
        ],
        &logp,
        &starts,
        &cfg,
        20,
    )
    .map_err(err)?;
    let (ny, z) = (rows[0].mean_acceptance, rows[1].mean_acceptance);
    let secs = start.elapsed().as_secs_f64();
    check(
        exact[0].mean_acceptance > 0.999 && ny - z >= 0.2 && secs < 120.0,
        format!(
            "exact at eps 0.01: {:.5}; at eps 0.1 nystrom {ny:.3} vs zero {z:.3}",
            exact[0].mean_acceptance
        ),
    )
}

/// Output with every timing field removed: JSON keys ending in `_seconds`
/// and CSV columns whose header ends in `_seconds`.
fn without_timing(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    if let Ok(mut v) = serde_json::from_str::<Value>(&text) {
        fn strip(v: &mut Value) {
            match v {
                Value::Object(m) => {
                    m.retain(|k, _| !k.ends_with("_seconds"));
                    m.values_mut().for_each(strip);
                }
                Value::Array(a) => a.iter_mut().for_each(strip),
                _ => {}
            }
        }
        strip(&mut v);
        return v.to_string();
    }
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return text;
    };
    let keep: Vec<bool> = header
        .split(',')
        .map(|h| !h.ends_with("_seconds"))
        .collect();
    text.lines()
        .map(|l| {
            l.split(',')
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(c, _)| c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(
        p("bench.json"),
        r#"{"experiment": "subsampling", "dataset": {"kind": "grid"}, "dim": 3, "n": 60,
            "n_test": 100, "m_values": [5], "trials": 1, "seed": 4,
            "tuning": {"n_validation": 40, "criterion": "j_hat",
                       "sigma_factors": [0.5, 1], "lambda_grid": [1e-3, 1e-1]}}"#,
    )
    .unwrap();
    std::fs::write(
        p("hmc.json"),
        r#"{"target": {"kind": "ring"}, "dim": 2, "n_starts": 3, "repetitions": 2, "seed": 5,
            "models": [{"id": "fit", "source": "file", "path": "model.json"},
                       {"id": "exact", "source": "exact"}]}"#,
    )
    .unwrap();
    let commands: Vec<(Vec<String>, Vec<&str>)> = vec![
        (
            vec![
                "generate",
                "ring",
                "--n",
                "150",
                "--d",
                "2",
                "--seed",
                "1",
                "-o",
                &p("ring.csv"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["ring.csv", "ring.json"],
        ),
        (
            vec![
                "fit",
                "--data",
                &p("ring.csv"),
                "--estimator",
                "nystrom",
                "--m",
                "30",
                "--seed",
                "2",
                "--sigma",
                "1.5",
                "--lambda",
                "1e-3",
                "-o",
                &p("model.json"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["model.json", "model.report.json"],
        ),
        (
            vec![
                "fit",
                "--data",
                &p("ring.csv"),
                "--estimator",
                "lite",
                "--m",
                "20",
                "--seed",
                "2",
                "--tune",
                "--sigma-grid",
                "1,2",
                "--lambda-grid",
                "1e-3,1e-2",
                "-o",
                &p("lite.json"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["lite.json", "lite.report.json", "lite.grid.csv"],
        ),
        (
            vec![
                "tune",
                "--data",
                &p("ring.csv"),
                "--estimator",
                "full",
                "--seed",
                "3",
                "--sigma-grid",
                "1,2",
                "--lambda-grid",
                "1e-2",
                "-o",
                &p("tune.csv"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["tune.csv"],
        ),
        (
            vec![
                "eval",
                "--model",
                &p("model.json"),
                "--data",
                &p("ring.csv"),
                "--fisher",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![],
        ),
        (
            vec![
                "bench",
                "--manifest",
                &p("bench.json"),
                "-o",
                &p("bench.csv"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec!["bench.csv", "bench.manifest.json"],
        ),
        (
            vec!["hmc", "--manifest", &p("hmc.json"), "-o", &p("hmc.csv")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["hmc.csv", "hmc.manifest.json"],
        ),
    ];
    let run = |args: &[String]| -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_kexfam"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{} failed: {}",
                args[0],
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let mut compared = 0;
    for (args, files) in &commands {
        let out1 = run(args)?;
        let snap: Vec<String> = files
            .iter()
            .map(|f| without_timing(&dir.path().join(f)))
            .collect();
        let out2 = run(args)?;
        if out1 != out2 {
            return Err(format!("{} printed different output", args[0]));
        }
        for (f, before) in files.iter().zip(snap) {
            if before != without_timing(&dir.path().join(f)) {
                return Err(format!("{} wrote a different {f}", args[0]));
            }
            compared += 1;
        }
    }
    Ok(format!(
        "{} commands run twice, {compared} output files identical",
        commands.len()
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "kernel derivatives vs finite differences", criterion_1),
        (2, "solver stationarity and minimizer", criterion_2),
        (3, "objective identity", criterion_3),
        (4, "lite equivalence", criterion_4),
        (5, "model derivative consistency", criterion_5),
        (6, "convergence trend on the ring", criterion_6),
        (7, "nystrom cost scaling", criterion_7),
        (8, "subsampling nesting", criterion_8),
        (9, "surrogate HMC sanity", criterion_9),
        (10, "CLI determinism", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
