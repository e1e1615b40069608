//! Diagnostics around the solvers and a trained dictionary.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::bases::{linear_surrogate, project_constraints, structural_coordinates, BaseDictionary};
use crate::embed::embed_graphs;
use crate::eval::{pearson, sample_pairs};
use crate::graph::{generate_er, rewire, to_mm_space, Graph, MmSpace};
use crate::ot::{entropic_gw, sliced_gw, sliced_gw_lifted, EntropicOptions, GwSolver, Lifted, SliceSet};
use crate::trainer::Checkpoint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverPair {
    pub i: usize,
    pub j: usize,
    pub sliced: f64,
    pub entropic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgwCorrelation {
    pub rho: f64,
    pub pairs: Vec<SolverPair>,
}

/// Pearson correlation between sliced and entropic costs over `pairs`
/// distinct pairs of `spaces`.
pub fn sgw_correlation(
    spaces: &[MmSpace],
    pairs: usize,
    slices: &SliceSet,
    entropic: &EntropicOptions,
    seed: u64,
) -> Result<SgwCorrelation> {
    let lifted: Vec<Lifted> = spaces.par_iter().map(|s| Lifted::new(s, slices.dim())).collect();
    let table = sample_pairs(spaces.len(), pairs, seed)
        .into_par_iter()
        .map(|(i, j)| {
            Ok(SolverPair {
                i,
                j,
                sliced: sliced_gw_lifted(&lifted[i], &lifted[j], slices)?.cost,
                entropic: entropic_gw(&spaces[i], &spaces[j], entropic)?.cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = table.iter().map(|p| p.sliced).collect();
    let y: Vec<f64> = table.iter().map(|p| p.entropic).collect();
    Ok(SgwCorrelation {
        rho: pearson(&x, &y)?,
        pairs: table,
    })
}

#[derive(Debug, Clone)]
pub struct SurrogateOptions {
    /// Solver for the structural coordinates.
    pub coordinates: GwSolver,
    /// Couplings of the fixed-point barycenter.
    pub barycenter: EntropicOptions,
    pub iterations: usize,
    /// Slices for the reconstruction error.
    pub slices: SliceSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateRow {
    pub graph: usize,
    pub surrogate_error: f64,
    pub barycenter_error: f64,
    pub surrogate_secs: f64,
    pub barycenter_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateReport {
    pub rows: Vec<SurrogateRow>,
    pub surrogate_mean_error: f64,
    pub barycenter_mean_error: f64,
    pub surrogate_mean_secs: f64,
    pub barycenter_mean_secs: f64,
}

/// Weighted GW barycenter of the bases on `M` points, by alternating
/// entropic couplings to every base with the closed-form structure update
/// `B = Σ_k w_k T_k B_k T_kᵀ / (p pᵀ)`, started from the linear surrogate.
pub fn fixed_point_barycenter(
    dict: &BaseDictionary,
    weights: &Array1<f64>,
    opts: &EntropicOptions,
    iterations: usize,
) -> Result<Array2<f64>> {
    let mut b = linear_surrogate(dict, weights)?;
    if dict.k() == 1 {
        return Ok(b);
    }
    let p = dict.base_measure();
    let bases = dict.base_spaces();
    for _ in 0..iterations {
        let current = MmSpace::new(b.clone(), p.clone())?;
        let mut next = Array2::zeros(b.raw_dim());
        for (base, &w) in bases.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let t = entropic_gw(&current, base, opts)?.coupling.into_plan();
            next.scaled_add(w, &t.dot(base.structure()).dot(&t.t()));
        }
        for ((i, j), v) in next.indexed_iter_mut() {
            *v /= p[i] * p[j];
        }
        b = project_constraints(&next)?;
    }
    Ok(b)
}

/// Sliced reconstruction error of the linear surrogate against the
/// fixed-point barycenter, graph by graph. Times cover building the
/// reconstruction from given coordinates.
pub fn surrogate_vs_barycenter(
    corpus: &[MmSpace],
    dict: &BaseDictionary,
    opts: &SurrogateOptions,
) -> Result<SurrogateReport> {
    let measure = dict.base_measure();
    let mut rows = Vec::with_capacity(corpus.len());
    for (graph, space) in corpus.iter().enumerate() {
        let w = structural_coordinates(space, dict, &opts.coordinates)?.weights;
        let start = Instant::now();
        let surrogate = linear_surrogate(dict, &w)?;
        let surrogate_secs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let bary = fixed_point_barycenter(dict, &w, &opts.barycenter, opts.iterations)?;
        let barycenter_secs = start.elapsed().as_secs_f64();
        let error = |b: Array2<f64>| -> Result<f64> {
            Ok(sliced_gw(space, &MmSpace::new(b, measure.clone())?, &opts.slices)?.cost)
        };
        rows.push(SurrogateRow {
            graph,
            surrogate_error: error(surrogate)?,
            barycenter_error: error(bary)?,
            surrogate_secs,
            barycenter_secs,
        });
    }
    if rows.is_empty() {
        return Err(Error::Insufficient("empty corpus".into()));
    }
    let mean = |f: fn(&SurrogateRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(SurrogateReport {
        surrogate_mean_error: mean(|r| r.surrogate_error),
        barycenter_mean_error: mean(|r| r.barycenter_error),
        surrogate_mean_secs: mean(|r| r.surrogate_secs),
        barycenter_mean_secs: mean(|r| r.barycenter_secs),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewireRow {
    pub epsilon: f64,
    pub mean_cosine_distance: f64,
    pub mean_l2_distance: f64,
}

fn cosine_distance(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let (nx, ny) = (x.dot(x).sqrt(), y.dot(y).sqrt());
    if nx == 0.0 || ny == 0.0 {
        return if nx == ny { 0.0 } else { 1.0 };
    }
    (1.0 - x.dot(y) / (nx * ny)).clamp(0.0, 2.0)
}

/// Embedding drift when only the topology is perturbed: every graph is
/// rewired at each `epsilon` with features kept, then compared with its
/// original embedding.
pub fn rewire_diagnostic(
    graphs: &[Graph],
    ckpt: &Checkpoint,
    solver: &GwSolver,
    epsilons: &[f64],
    seed: u64,
) -> Result<Vec<RewireRow>> {
    if graphs.is_empty() {
        return Err(Error::Insufficient("no graphs to rewire".into()));
    }
    let to_vectors = |gs: &[Graph]| -> Result<Vec<Array1<f64>>> {
        Ok(embed_graphs(gs, ckpt, solver)?.iter().map(|e| Array1::from(e.to_vector())).collect())
    };
    let base = to_vectors(graphs)?;
    epsilons
        .iter()
        .map(|&eps| {
            let perturbed = graphs
                .iter()
                .enumerate()
                .map(|(i, g)| rewire(g, eps, seed.wrapping_add(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            let z = to_vectors(&perturbed)?;
            let n = graphs.len() as f64;
            let cos = base.iter().zip(&z).map(|(a, b)| cosine_distance(a, b)).sum::<f64>() / n;
            let l2 = base
                .iter()
                .zip(&z)
                .map(|(a, b)| {
                    let d = a - b;
                    d.dot(&d).sqrt()
                })
                .sum::<f64>()
                / n;
            Ok(RewireRow {
                epsilon: eps,
                mean_cosine_distance: cos,
                mean_l2_distance: l2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub edges: usize,
    pub seconds: f64,
    /// Time relative to the previous row.
    pub ratio: Option<f64>,
}

/// Wall time of one sliced GW solve between a sparse random graph of each
/// size (mean degree `degree`) and a fixed `m`-point base. The best of
/// `reps` runs is reported.
pub fn bench_sliced(sizes: &[usize], degree: f64, m: usize, slices: &SliceSet, reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let base = crate::bases::init_dictionary(1, m, seed)?.base_space(0);
    let mut rows: Vec<BenchRow> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("benchmark size {n} is below 2")));
        }
        let g = generate_er(n, (degree / (n - 1) as f64).min(1.0), seed ^ n as u64)?;
        let space = to_mm_space(&g)?;
        let mut best = f64::INFINITY;
        for _ in 0..reps.max(1) {
            let start = Instant::now();
            sliced_gw(&space, &base, slices)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        let ratio = rows.last().map(|r| best / r.seconds);
        rows.push(BenchRow {
            n,
            edges: g.edge_count(),
            seconds: best,
            ratio,
        });
    }
    Ok(rows)
}
