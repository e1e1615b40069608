//! Correlation, alignment and separability measures.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::LabeledPool;
use crate::embed::embed_graphs;
use crate::graph::{to_mm_space, Graph};
use crate::ot::GwSolver;
use crate::trainer::Checkpoint;
use crate::{Error, Result};

fn centered(x: ArrayView2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    &x - &mean
}

/// Linear centered kernel alignment between two row-aligned matrices.
pub fn cka_linear(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("{} rows against {}", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 {
        return Err(Error::Insufficient("CKA needs at least 2 rows".into()));
    }
    let (x, y) = (centered(x), centered(y));
    let fro = |m: Array2<f64>| m.mapv(|v| v * v).sum();
    let cross = fro(y.t().dot(&x));
    let nx = fro(x.t().dot(&x)).sqrt();
    let ny = fro(y.t().dot(&y)).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    Ok((cross / (nx * ny)).clamp(0.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Insufficient("correlation needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("undefined correlation: zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided permutation test of a Pearson correlation: the fraction of
/// shuffles of `y` whose |ρ| reaches the observed one, counted with the
/// observation itself.
pub fn permutation_p_value(x: &[f64], y: &[f64], shuffles: usize, seed: u64) -> Result<f64> {
    let observed = pearson(x, y)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..shuffles {
        perm.shuffle(&mut rng);
        if pearson(x, &perm)?.abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (shuffles + 1) as f64)
}

/// Two-sided p-value of `rho` from `n` pairs under the Student t
/// approximation with n − 2 degrees of freedom.
pub fn t_test_p_value(rho: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Insufficient("t-test needs at least 3 pairs".into()));
    }
    let df = (n - 2) as f64;
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let t = rho.abs() * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(2.0 * dist.sf(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryPair {
    pub i: usize,
    pub j: usize,
    pub gw_distance: f64,
    pub latent_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryReport {
    pub rho: f64,
    pub p_value: f64,
    pub t_test_p_value: f64,
    pub pairs: Vec<IsometryPair>,
}

pub const PERMUTATION_SHUFFLES: usize = 10_000;

/// Correlates reference GW discrepancies with Euclidean distances between
/// embeddings over `pairs` distinct unordered graph pairs (all pairs when
/// fewer exist). `solver` embeds, `reference` measures the graphs.
pub fn isometry_study(
    graphs: &[Graph],
    ckpt: &Checkpoint,
    solver: &GwSolver,
    reference: &GwSolver,
    pairs: usize,
    seed: u64,
) -> Result<IsometryReport> {
    let n = graphs.len();
    let total = n * n.saturating_sub(1) / 2;
    if total < 3 || pairs < 3 {
        return Err(Error::Insufficient(format!("{n} graphs and {pairs} pairs are too few")));
    }
    let index = sample_pairs(n, pairs, seed);

    let z: Vec<Array1<f64>> = embed_graphs(graphs, ckpt, solver)?
        .iter()
        .map(|e| Array1::from(e.to_vector()))
        .collect();
    let spaces = graphs.iter().map(to_mm_space).collect::<Result<Vec<_>>>()?;
    let table = index
        .par_iter()
        .map(|&(i, j)| {
            let gw = reference.solve(&spaces[i], &spaces[j])?.cost;
            let d = &z[i] - &z[j];
            Ok(IsometryPair {
                i,
                j,
                gw_distance: gw,
                latent_distance: d.dot(&d).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gw: Vec<f64> = table.iter().map(|p| p.gw_distance).collect();
    let lat: Vec<f64> = table.iter().map(|p| p.latent_distance).collect();
    let rho = pearson(&gw, &lat)?;
    Ok(IsometryReport {
        rho,
        p_value: permutation_p_value(&gw, &lat, PERMUTATION_SHUFFLES, seed ^ 0x5eed)?,
        t_test_p_value: t_test_p_value(rho, table.len())?,
        pairs: table,
    })
}

/// Up to `count` distinct unordered pairs of `0..n`, in row-major order.
pub(crate) fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, total, count.min(total)).into_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|c| unrank_pair(c, n)).collect()
}

/// The `c`-th pair `(i, j)`, `i < j`, in row-major order.
fn unrank_pair(mut c: usize, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if c < row {
            return (i, i + 1 + c);
        }
        c -= row;
    }
    unreachable!("pair rank out of range")
}

/// Column ranges of the embedding blocks `[w ‖ f(w) ‖ vec(H)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EmbeddingLayout {
    pub k: usize,
    pub stats: usize,
    pub features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Coords,
    Decoded,
    Features,
    Full,
}

impl Component {
    pub const PARTS: [Component; 3] = [Component::Coords, Component::Decoded, Component::Features];

    pub fn name(self) -> &'static str {
        match self {
            Component::Coords => "coords",
            Component::Decoded => "decoded",
            Component::Features => "features",
            Component::Full => "full",
        }
    }

    fn range(self, layout: EmbeddingLayout) -> std::ops::Range<usize> {
        let (a, b) = (layout.k, layout.k + layout.stats);
        match self {
            Component::Coords => 0..a,
            Component::Decoded => a..b,
            Component::Features => b..b + layout.features,
            Component::Full => 0..b + layout.features,
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coords" => Ok(Component::Coords),
            "decoded" => Ok(Component::Decoded),
            "features" => Ok(Component::Features),
            "full" => Ok(Component::Full),
            _ => Err(Error::InvalidParameter(format!("unknown component {s:?}"))),
        }
    }
}

const WITHIN_FLOOR: f64 = 1e-12;

/// Between-class over within-class scatter of one embedding block.
pub fn fisher_ratio(pool: &LabeledPool, layout: EmbeddingLayout, component: Component) -> Result<f64> {
    let range = component.range(layout);
    let width = layout.k + layout.stats + layout.features;
    if width != pool.vectors.ncols() {
        return Err(Error::Shape(format!(
            "layout expects {width} columns, embeddings have {}",
            pool.vectors.ncols()
        )));
    }
    let x = pool.vectors.slice(s![.., range]);
    let members = pool.members();
    if members.len() < 2 {
        return Err(Error::Insufficient("Fisher ratio needs at least 2 classes".into()));
    }
    if let Some((c, m)) = members.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::Insufficient(format!("class {c} has {} sample", m.len())));
    }
    let n = pool.len() as f64;
    let global = x.mean_axis(Axis(0)).expect("nonempty");
    let (mut within, mut between) = (0.0, 0.0);
    for items in members.values() {
        let block = x.select(Axis(0), items);
        let mean = block.mean_axis(Axis(0)).expect("nonempty");
        within += (&block - &mean).mapv(|v| v * v).sum();
        let d = &mean - &global;
        between += items.len() as f64 / n * d.dot(&d);
    }
    Ok(between / (within / n).max(WITHIN_FLOOR))
}

/// The block with the largest ratio, with every block's ratio.
pub fn dominant_component(pool: &LabeledPool, layout: EmbeddingLayout) -> Result<(Component, Vec<(Component, f64)>)> {
    let ratios = Component::PARTS
        .iter()
        .filter(|c| !c.range(layout).is_empty())
        .map(|&c| fisher_ratio(pool, layout, c).map(|r| (c, r)))
        .collect::<Result<Vec<_>>>()?;
    let best = ratios
        .iter()
        .copied()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .ok_or_else(|| Error::Insufficient("no embedding block is populated".into()))?;
    Ok((best.0, ratios))
}
