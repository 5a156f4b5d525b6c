//! Choice of Nystrom basis: which points anchor basis functions and which
//! of their `d` derivative components are used.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng;

/// How a basis was selected. Recorded in saved models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BasisMode {
    /// All `d` components of `m` uniformly chosen points.
    AllComponents,
    /// Each component of `m` chosen points kept independently with probability `p`.
    Bernoulli { p: f64 },
    /// Exactly `ell` distinct components of each of `m` chosen points.
    PerPoint { ell: usize },
    /// `count` components drawn uniformly from all `n * d` training components.
    Global,
    /// Caller-supplied points and components.
    Explicit,
}

/// Parameters for [`make_basis`].
#[derive(Debug, Clone, PartialEq)]
pub enum BasisRequest {
    AllComponents {
        m: usize,
    },
    Bernoulli {
        m: usize,
        p: f64,
    },
    PerPoint {
        m: usize,
        ell: usize,
    },
    Global {
        count: usize,
    },
    Explicit {
        points: PointSet,
        index_set: Vec<(usize, usize)>,
    },
}

/// Basis points `Y` and the component index set `I` of `(point, dim)` pairs.
///
/// `second_order` additionally includes `d_i^2 k(Y_a, .)` for every
/// `(a, i)` in `I`, doubling the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub mode: BasisMode,
    pub points: PointSet,
    pub index_set: Vec<(usize, usize)>,
    pub seed: Option<u64>,
    pub second_order: bool,
}

impl BasisSpec {
    /// Every component of every point in `points`.
    pub fn all_components(points: PointSet) -> Self {
        let d = points.dim();
        let index_set = (0..points.len())
            .flat_map(|a| (0..d).map(move |i| (a, i)))
            .collect();
        Self {
            mode: BasisMode::AllComponents,
            points,
            index_set,
            seed: None,
            second_order: false,
        }
    }

    pub fn explicit(points: PointSet, index_set: Vec<(usize, usize)>) -> Result<Self> {
        let spec = Self {
            mode: BasisMode::Explicit,
            points,
            index_set,
            seed: None,
            second_order: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_second_order(mut self, on: bool) -> Self {
        self.second_order = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Number of basis functions (coefficients).
    pub fn size(&self) -> usize {
        self.index_set.len() * if self.second_order { 2 } else { 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.index_set.is_empty() {
            return Err(Error::invalid("basis index set is empty"));
        }
        let mut seen = BTreeSet::new();
        for &(a, i) in &self.index_set {
            if a >= self.points.len() || i >= self.points.dim() {
                return Err(Error::invalid(format!(
                    "basis component ({a}, {i}) out of range for {} points in dimension {}",
                    self.points.len(),
                    self.points.dim()
                )));
            }
            if !seen.insert((a, i)) {
                return Err(Error::invalid(format!(
                    "basis component ({a}, {i}) repeated"
                )));
            }
        }
        Ok(())
    }

    /// Number of distinct points referenced by the index set.
    pub fn referenced_points(&self) -> usize {
        self.index_set
            .iter()
            .map(|&(a, _)| a)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Drops points that no component references and sorts the index set
    /// point-major. Order of the retained points is preserved.
    pub fn compact(&self) -> Self {
        self.compact_with_order().0
    }

    /// [`compact`](Self::compact), also returning for each new index-set
    /// entry its position in the original index set.
    pub fn compact_with_order(&self) -> (Self, Vec<usize>) {
        let used: BTreeSet<usize> = self.index_set.iter().map(|&(a, _)| a).collect();
        let mut remap = vec![usize::MAX; self.points.len()];
        let kept: Vec<usize> = used.into_iter().collect();
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let mut entries: Vec<((usize, usize), usize)> = self
            .index_set
            .iter()
            .enumerate()
            .map(|(pos, &(a, i))| ((remap[a], i), pos))
            .collect();
        entries.sort_unstable();
        let (index_set, order) = entries.into_iter().unzip();
        let spec = Self {
            mode: self.mode.clone(),
            points: self.points.select(&kept),
            index_set,
            seed: self.seed,
            second_order: self.second_order,
        };
        (spec, order)
    }
}

/// Selects a basis from training data `x`. Deterministic given `seed`;
/// point subsets are drawn uniformly without replacement and returned in
/// increasing index order.
pub fn make_basis(x: &PointSet, request: &BasisRequest, seed: u64) -> Result<BasisSpec> {
    let n = x.len();
    let d = x.dim();
    let mut rng = rng::stream(seed);
    let pick_points = |m: usize, rng: &mut rng::Rng| -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::invalid("basis needs at least one point"));
        }
        if m > n {
            return Err(Error::invalid(format!(
                "cannot choose {m} basis points from {n} training points"
            )));
        }
        let mut chosen = index::sample(rng, n, m).into_vec();
        chosen.sort_unstable();
        Ok(chosen)
    };
    let (mode, points, index_set) = match request {
        BasisRequest::AllComponents { m } => {
            let chosen = pick_points(*m, &mut rng)?;
            let index_set = (0..chosen.len())
                .flat_map(|a| (0..d).map(move |i| (a, i)))
                .collect();
            (BasisMode::AllComponents, x.select(&chosen), index_set)
        }
        BasisRequest::Bernoulli { m, p } => {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::invalid(format!(
                    "inclusion probability {p} not in (0, 1]"
                )));
            }
            let chosen = pick_points(*m, &mut rng)?;
            let mut index_set = Vec::new();
            for a in 0..chosen.len() {
                for i in 0..d {
                    if rng.random::<f64>() < *p {
                        index_set.push((a, i));
                    }
                }
            }
            if index_set.is_empty() {
                return Err(Error::invalid(
                    "Bernoulli component sampling selected no components",
                ));
            }
            (BasisMode::Bernoulli { p: *p }, x.select(&chosen), index_set)
        }
        BasisRequest::PerPoint { m, ell } => {
            if *ell == 0 || *ell > d {
                return Err(Error::invalid(format!("ell = {ell} not in [1, {d}]")));
            }
            let chosen = pick_points(*m, &mut rng)?;
            let mut index_set = Vec::with_capacity(chosen.len() * ell);
            for a in 0..chosen.len() {
                let mut dims = index::sample(&mut rng, d, *ell).into_vec();
                dims.sort_unstable();
                index_set.extend(dims.into_iter().map(|i| (a, i)));
            }
            (
                BasisMode::PerPoint { ell: *ell },
                x.select(&chosen),
                index_set,
            )
        }
        BasisRequest::Global { count } => {
            if *count == 0 || *count > n * d {
                return Err(Error::invalid(format!(
                    "cannot choose {count} components from {} available",
                    n * d
                )));
            }
            let mut flat = index::sample(&mut rng, n * d, *count).into_vec();
            flat.sort_unstable();
            let index_set = flat.into_iter().map(|f| (f / d, f % d)).collect();
            (BasisMode::Global, x.clone(), index_set)
        }
        BasisRequest::Explicit { points, index_set } => {
            let mut spec = BasisSpec::explicit(points.clone(), index_set.clone())?;
            spec.seed = Some(seed);
            return Ok(spec);
        }
    };
    let spec = BasisSpec {
        mode,
        points,
        index_set,
        seed: Some(seed),
        second_order: false,
    };
    spec.validate()?;
    Ok(spec)
}
