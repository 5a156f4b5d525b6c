//! Synthetic benchmark densities, their samplers and analytic scores, and
//! dataset I/O.
//!
//! * `ring`: uniform angle on one of several circles, radius perturbed by
//!   Gaussian noise, plus independent Gaussian noise in coordinates 3..d.
//! * `grid`: equal-variance Gaussian mixture with one component at each of
//!   `d` distinct vertices of the hypercube `{0, side}^d`.
//! * `gaussian`: isotropic centred Gaussian, used as an HMC target.
//!
//! Datasets are written as a CSV file (header `x1,...,xd`, one row per point)
//! plus a JSON sidecar next to it carrying the generator, seed and
//! parameters.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub radii: Vec<f64>,
    pub radial_std: f64,
    pub noise_std: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 3.0, 5.0],
            radial_std: 0.1,
            noise_std: 0.1,
        }
    }
}

impl RingParams {
    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::invalid("ring needs at least one radius"));
        }
        for (i, r) in self.radii.iter().enumerate() {
            if !(*r > 0.0 && r.is_finite()) {
                return Err(Error::invalid(format!("ring radius {r} is not positive")));
            }
            if self.radii[..i].contains(r) {
                return Err(Error::invalid(format!("ring radius {r} repeated")));
            }
        }
        if !(self.radial_std >= 0.0 && self.noise_std > 0.0) {
            return Err(Error::invalid(
                "ring noise standard deviations must be positive",
            ));
        }
        Ok(())
    }
}

/// User-facing grid settings; the vertices are drawn from the seed by [`sample_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub side: f64,
    pub component_std: f64,
    /// Mixture weights; `None` means uniform.
    pub weights: Option<Vec<f64>>,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            side: 4.0,
            component_std: 1.0,
            weights: None,
        }
    }
}

/// A fully specified grid mixture: `d` vertices in `{0, side}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub vertices: Vec<Vec<f64>>,
    pub side: f64,
    pub component_std: f64,
    pub weights: Vec<f64>,
}

impl GridParams {
    /// Draws `d` distinct hypercube vertices uniformly without replacement.
    pub fn random(d: usize, options: &GridOptions, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("grid dimension must be at least 1"));
        }
        let weights = match &options.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / d as f64; d],
        };
        let mut rng = rng::stream(seed);
        let mut chosen: Vec<Vec<bool>> = Vec::with_capacity(d);
        if d < 64 && (1u64 << d) as usize <= 4 * d {
            // few candidates: sample vertex indices directly
            let total = 1usize << d;
            for code in index::sample(&mut rng, total, d).into_iter() {
                chosen.push((0..d).map(|bit| (code >> bit) & 1 == 1).collect());
            }
        } else {
            while chosen.len() < d {
                let v: Vec<bool> = (0..d).map(|_| rng.random::<bool>()).collect();
                if !chosen.contains(&v) {
                    chosen.push(v);
                }
            }
        }
        let vertices = chosen
            .into_iter()
            .map(|bits| {
                bits.into_iter()
                    .map(|b| if b { options.side } else { 0.0 })
                    .collect()
            })
            .collect();
        let params = Self {
            vertices,
            side: options.side,
            component_std: options.component_std,
            weights,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.vertices.iter().any(|v| v.len() != d) {
            return Err(Error::invalid(
                "grid vertices must be nonempty with equal dimension",
            ));
        }
        if !(self.side > 0.0 && self.component_std > 0.0) {
            return Err(Error::invalid(
                "grid side and component std must be positive",
            ));
        }
        if self.weights.len() != self.vertices.len() {
            return Err(Error::invalid("one weight per grid vertex is required"));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "grid weights must be nonnegative and sum to 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub std: f64,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self { std: 1.0 }
    }
}

/// Which generator produced a dataset, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", content = "params", rename_all = "lowercase")]
pub enum Generator {
    Ring(RingParams),
    Grid(GridParams),
    Gaussian(GaussianParams),
    External,
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Ring(_) => "ring",
            Generator::Grid(_) => "grid",
            Generator::Gaussian(_) => "gaussian",
            Generator::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: PointSet,
    pub generator: Generator,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    generator: Generator,
    seed: Option<u64>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn external(points: PointSet) -> Self {
        Self {
            points,
            generator: Generator::External,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// The analytic density this dataset was drawn from, if known.
    pub fn density(&self) -> Option<SyntheticDensity> {
        let dim = self.dim();
        match &self.generator {
            Generator::Ring(p) => Some(SyntheticDensity::Ring {
                params: p.clone(),
                dim,
            }),
            Generator::Grid(p) => Some(SyntheticDensity::Grid(p.clone())),
            Generator::Gaussian(p) => Some(SyntheticDensity::Gaussian { dim, std: p.std }),
            Generator::External => None,
        }
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        write_csv(&self.points, csv_path)?;
        let sidecar = Sidecar {
            generator: self.generator.clone(),
            seed: self.seed,
            n: self.len(),
            d: self.dim(),
        };
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        std::fs::write(Self::sidecar_path(csv_path), json)?;
        Ok(())
    }

    /// Reads a CSV and, when present, its sidecar. Without a sidecar the
    /// dataset is tagged `external`.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let points = read_csv(csv_path)?;
        let sidecar_path = Self::sidecar_path(csv_path);
        if !sidecar_path.exists() {
            return Ok(Self::external(points));
        }
        let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(&sidecar_path)?)?;
        if sidecar.n != points.len() || sidecar.d != points.dim() {
            return Err(Error::Format(format!(
                "sidecar says {}x{} but CSV holds {}x{}",
                sidecar.n,
                sidecar.d,
                points.len(),
                points.dim()
            )));
        }
        Ok(Self {
            points,
            generator: sidecar.generator,
            seed: sidecar.seed,
        })
    }
}

pub fn write_csv(points: &PointSet, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    write_points(points, &mut w)?;
    w.flush()?;
    Ok(())
}

/// CSV text of a point set, as written by [`write_csv`].
pub fn points_to_csv_string(points: &PointSet) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    write_points(points, &mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn write_points<W: std::io::Write>(points: &PointSet, w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record((1..=points.dim()).map(|i| format!("x{i}")))?;
    for row in points.rows() {
        // `{}` on f64 prints the shortest string that parses back to the same value
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<PointSet> {
    let reader = csv::Reader::from_path(path)?;
    read_points(reader)
}

pub fn points_from_csv_str(text: &str) -> Result<PointSet> {
    read_points(csv::Reader::from_reader(text.as_bytes()))
}

fn read_points<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<PointSet> {
    let headers = reader.headers()?.clone();
    let d = headers.len();
    for (i, h) in headers.iter().enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(Error::Format(format!(
                "expected header x1..x{d}, found column {h:?} at position {}",
                i + 1
            )));
        }
    }
    let mut points = PointSet::with_dim(d.max(1));
    let mut row = Vec::with_capacity(d);
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        row.clear();
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "row {}: cannot parse {field:?} as a number",
                    line + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("row {}: non-finite value", line + 1)));
            }
            row.push(v);
        }
        points.push(&row)?;
    }
    if points.is_empty() {
        return Err(Error::Format("dataset has no rows".into()));
    }
    Ok(points)
}

/// Ring samples. Per point the draws are consumed in the order: circle
/// index, angle, radial noise, then one normal per extra coordinate.
pub fn sample_ring(n: usize, d: usize, params: &RingParams, seed: u64) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::invalid(format!("ring needs d >= 2, got {d}")));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    params.validate()?;
    let mut rng = rng::stream(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let k = rng.random_range(0..params.radii.len());
        let angle = rng.random_range(0.0..2.0 * PI);
        let z: f64 = StandardNormal.sample(&mut rng);
        let r = params.radii[k] + params.radial_std * z;
        data.push(r * angle.cos());
        data.push(r * angle.sin());
        for _ in 2..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(params.noise_std * z);
        }
    }
    Ok(Dataset {
        points: PointSet::new(data, d)?,
        generator: Generator::Ring(params.clone()),
        seed: Some(seed),
    })
}

/// Grid-mixture samples. The vertices come from a sub-stream of `seed`;
/// per point the draws are the component index, then `d` normals.
pub fn sample_grid(n: usize, d: usize, options: &GridOptions, seed: u64) -> Result<Dataset> {
    let params = GridParams::random(d, options, rng::derive_seed(seed, &[0x67726964]))?;
    sample_grid_with(n, &params, seed)
}

/// Samples from an already resolved grid mixture.
pub fn sample_grid_with(n: usize, params: &GridParams, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    params.validate()?;
    let d = params.dim();
    let chooser = WeightedIndex::new(&params.weights)
        .map_err(|e| Error::invalid(format!("grid weights: {e}")))?;
    let mut rng = rng::stream(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let k = chooser.sample(&mut rng);
        for v in &params.vertices[k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(v + params.component_std * z);
        }
    }
    Ok(Dataset {
        points: PointSet::new(data, d)?,
        generator: Generator::Grid(params.clone()),
        seed: Some(seed),
    })
}

pub fn sample_gaussian(n: usize, d: usize, params: GaussianParams, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("need n >= 1 and d >= 1"));
    }
    if !(params.std > 0.0) {
        return Err(Error::invalid("gaussian std must be positive"));
    }
    let mut rng = rng::stream(seed);
    let data = (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.std * z
        })
        .collect();
    Ok(Dataset {
        points: PointSet::new(data, d)?,
        generator: Generator::Gaussian(params),
        seed: Some(seed),
    })
}

/// A density known in closed form: log-density and score `grad log p`.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticDensity {
    Ring { params: RingParams, dim: usize },
    Grid(GridParams),
    Gaussian { dim: usize, std: f64 },
}

impl SyntheticDensity {
    pub fn dim(&self) -> usize {
        match self {
            SyntheticDensity::Ring { dim, .. } | SyntheticDensity::Gaussian { dim, .. } => *dim,
            SyntheticDensity::Grid(p) => p.dim(),
        }
    }

    /// Normalized log-density.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        match self {
            SyntheticDensity::Ring { params, .. } => ring_log_density(params, x),
            SyntheticDensity::Grid(p) => Ok(grid_log_density(p, x)),
            SyntheticDensity::Gaussian { std, .. } => {
                Ok(x.iter().map(|v| log_normal_pdf(*v, 0.0, *std)).sum())
            }
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        match self {
            SyntheticDensity::Ring { params, .. } => ring_true_score(params, x),
            SyntheticDensity::Grid(p) => grid_true_score(p, x),
            SyntheticDensity::Gaussian { std, .. } => {
                Ok(x.iter().map(|v| -v / (std * std)).collect())
            }
        }
    }

    /// Draws a dataset from this density.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            SyntheticDensity::Ring { params, dim } => sample_ring(n, *dim, params, seed),
            SyntheticDensity::Grid(p) => sample_grid_with(n, p, seed),
            SyntheticDensity::Gaussian { dim, std } => {
                sample_gaussian(n, *dim, GaussianParams { std: *std }, seed)
            }
        }
    }
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Radius-mixture terms `log w_k + log N(r; R_k, s^2)` for each circle.
fn ring_radial_terms(params: &RingParams, r: f64) -> Vec<f64> {
    let log_w = -(params.radii.len() as f64).ln();
    params
        .radii
        .iter()
        .map(|&rk| log_w + log_normal_pdf(r, rk, params.radial_std))
        .collect()
}

fn ring_check(params: &RingParams, x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::invalid("ring points need at least two coordinates"));
    }
    if !(params.radial_std > 0.0) {
        return Err(Error::invalid("ring density needs radial_std > 0"));
    }
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return Err(Error::SingularInput(
            "ring density is undefined at radius 0".into(),
        ));
    }
    Ok(r)
}

/// `log p(x)` with `p(x) = [sum_k w_k N(r; R_k, s^2)] / (2 pi r) * prod_{j>2} N(x_j; 0, t^2)`.
pub fn ring_log_density(params: &RingParams, x: &[f64]) -> Result<f64> {
    let r = ring_check(params, x)?;
    let radial = log_sum_exp(&ring_radial_terms(params, r)) - r.ln() - (2.0 * PI).ln();
    let extra: f64 = x[2..]
        .iter()
        .map(|v| log_normal_pdf(*v, 0.0, params.noise_std))
        .sum();
    Ok(radial + extra)
}

pub fn ring_true_score(params: &RingParams, x: &[f64]) -> Result<Vec<f64>> {
    let r = ring_check(params, x)?;
    let terms = ring_radial_terms(params, r);
    let norm = log_sum_exp(&terms);
    let s2 = params.radial_std * params.radial_std;
    let d_log_dr: f64 = terms
        .iter()
        .zip(&params.radii)
        .map(|(t, rk)| (t - norm).exp() * (rk - r) / s2)
        .sum::<f64>()
        - 1.0 / r;
    let t2 = params.noise_std * params.noise_std;
    let mut score = Vec::with_capacity(x.len());
    score.push(d_log_dr * x[0] / r);
    score.push(d_log_dr * x[1] / r);
    score.extend(x[2..].iter().map(|v| -v / t2));
    Ok(score)
}

fn grid_component_terms(params: &GridParams, x: &[f64]) -> Vec<f64> {
    let s = params.component_std;
    params
        .vertices
        .iter()
        .zip(&params.weights)
        .map(|(v, w)| {
            w.ln()
                + v.iter()
                    .zip(x)
                    .map(|(vi, xi)| log_normal_pdf(*xi, *vi, s))
                    .sum::<f64>()
        })
        .collect()
}

pub fn grid_log_density(params: &GridParams, x: &[f64]) -> f64 {
    log_sum_exp(&grid_component_terms(params, x))
}

/// `sum_k r_k(x) (v_k - x) / s^2` with responsibilities from log-sum-exp.
pub fn grid_true_score(params: &GridParams, x: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(params.dim(), x.len())?;
    let terms = grid_component_terms(params, x);
    let norm = log_sum_exp(&terms);
    let s2 = params.component_std * params.component_std;
    let mut score = vec![0.0; x.len()];
    for (t, v) in terms.iter().zip(&params.vertices) {
        let resp = (t - norm).exp();
        if resp == 0.0 {
            continue;
        }
        for ((s, vi), xi) in score.iter_mut().zip(v).zip(x) {
            *s += resp * (vi - xi) / s2;
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_rejects_one_dimension() {
        assert!(sample_ring(10, 1, &RingParams::default(), 0).is_err());
    }

    #[test]
    fn ring_without_noise_lies_on_circle() {
        let params = RingParams {
            radii: vec![2.5],
            radial_std: 0.0,
            noise_std: 0.1,
        };
        let ds = sample_ring(200, 2, &params, 11).unwrap();
        for p in ds.points.rows() {
            assert!((p[0].hypot(p[1]) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_extra_dimension_score_is_gaussian() {
        let params = RingParams::default();
        let x = [1.0, 2.0, 0.3, -0.05];
        let s = ring_true_score(&params, &x).unwrap();
        assert!((s[2] + 0.3 / 0.01).abs() < 1e-9);
        assert!((s[3] - 0.05 / 0.01).abs() < 1e-9);
    }

    #[test]
    fn ring_score_at_single_radius_mode_is_jacobian_term() {
        let params = RingParams {
            radii: vec![2.0],
            radial_std: 0.1,
            noise_std: 0.1,
        };
        let s = ring_true_score(&params, &[2.0, 0.0, 0.0]).unwrap();
        assert!((s[0] + 0.5).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn ring_score_singular_at_origin() {
        let err = ring_true_score(&RingParams::default(), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::SingularInput(_)));
    }

    #[test]
    fn grid_single_component_score() {
        let params = GridParams {
            vertices: vec![vec![4.0]],
            side: 4.0,
            component_std: 0.5,
            weights: vec![1.0],
        };
        let s = grid_true_score(&params, &[3.0]).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn grid_symmetric_point_score() {
        let params = GridParams {
            vertices: vec![vec![0.0, 0.0], vec![4.0, 0.0]],
            side: 4.0,
            component_std: 1.0,
            weights: vec![0.5, 0.5],
        };
        let x = [2.0, 1.0];
        let s = grid_true_score(&params, &x).unwrap();
        // (v1 + v2 - 2x) / (2 s^2)
        assert!((s[0] - 0.0).abs() < 1e-12);
        assert!((s[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_vertices_distinct_and_on_cube() {
        for d in 1..8 {
            let p = GridParams::random(d, &GridOptions::default(), d as u64).unwrap();
            assert_eq!(p.vertices.len(), d);
            for (i, v) in p.vertices.iter().enumerate() {
                assert!(v.iter().all(|c| *c == 0.0 || *c == 4.0));
                assert!(!p.vertices[..i].contains(v));
            }
        }
    }

    #[test]
    fn bad_grid_weights_rejected() {
        let opts = GridOptions {
            weights: Some(vec![0.7, 0.7]),
            ..GridOptions::default()
        };
        assert!(GridParams::random(2, &opts, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pts = PointSet::from_rows(&[[0.1, -1e-300], [1.0 / 3.0, 2e17]]).unwrap();
        let text = points_to_csv_string(&pts).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        assert_eq!(points_from_csv_str(&text).unwrap(), pts);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(points_from_csv_str("a,b\n1,2\n").is_err());
        assert!(points_from_csv_str("x1,x2\n").is_err());
    }
}
