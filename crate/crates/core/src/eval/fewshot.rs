//! Episodic prototypical-network evaluation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embed::EmbeddingRecord;
use crate::{Error, Result};

/// Labeled vectors, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub vectors: Array2<f64>,
    pub labels: Vec<i64>,
}

impl LabeledPool {
    pub fn new(vectors: Array2<f64>, labels: Vec<i64>) -> Result<Self> {
        if vectors.nrows() != labels.len() {
            return Err(Error::Shape(format!("{} vectors, {} labels", vectors.nrows(), labels.len())));
        }
        Ok(LabeledPool { vectors, labels })
    }

    /// Records without a label are rejected; all vectors must share a length.
    pub fn from_records(records: &[EmbeddingRecord]) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.z.len());
        let mut data = Vec::with_capacity(records.len() * dim);
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            if r.z.len() != dim {
                return Err(Error::Shape(format!("{} has length {}, expected {dim}", r.graph_id, r.z.len())));
            }
            let label = r
                .label
                .ok_or_else(|| Error::Integrity(format!("{} has no label", r.graph_id)))?;
            data.extend_from_slice(&r.z);
            labels.push(label);
        }
        let vectors = Array2::from_shape_vec((records.len(), dim), data).expect("sized");
        Self::new(vectors, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Item indices per class, classes ascending.
    pub fn members(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.labels.iter().enumerate() {
            out.entry(c).or_default().push(i);
        }
        out
    }
}

/// One n-way k-shot trial over pool indices. `classes` is ascending and
/// defines the class index used for tie breaking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub run: usize,
    pub classes: Vec<i64>,
    pub k_shot: usize,
    pub queries_per_class: usize,
    pub support: Vec<(usize, i64)>,
    pub query: Vec<(usize, i64)>,
    pub seed: u64,
}

/// Samples `runs` episodes. Classes with fewer than `k_shot + queries`
/// members are left out and returned in the second position.
pub fn sample_episodes(
    pool: &LabeledPool,
    n_way: usize,
    k_shot: usize,
    queries: usize,
    runs: usize,
    seed: u64,
) -> Result<(Vec<Episode>, Vec<i64>)> {
    if n_way < 2 || k_shot == 0 || queries == 0 {
        return Err(Error::InvalidParameter(format!(
            "need n_way >= 2, k_shot >= 1, queries >= 1 (got {n_way}, {k_shot}, {queries})"
        )));
    }
    let need = k_shot + queries;
    let members = pool.members();
    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for (&c, items) in &members {
        if items.len() >= need {
            eligible.push(c);
        } else {
            excluded.push(c);
        }
    }
    if eligible.len() < n_way {
        let short: Vec<String> = excluded
            .iter()
            .map(|c| format!("class {c} has {} items", members[c].len()))
            .collect();
        return Err(Error::Insufficient(format!(
            "{n_way}-way episodes with {k_shot} shots and {queries} queries need {n_way} classes of at least {need} items; only {} qualify ({})",
            eligible.len(),
            short.join(", ")
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut classes: Vec<i64> = eligible.choose_multiple(&mut rng, n_way).copied().collect();
        classes.sort_unstable();
        let (mut support, mut query) = (Vec::new(), Vec::new());
        for &c in &classes {
            let picked: Vec<usize> = members[&c].choose_multiple(&mut rng, need).copied().collect();
            support.extend(picked[..k_shot].iter().map(|&i| (i, c)));
            query.extend(picked[k_shot..].iter().map(|&i| (i, c)));
        }
        episodes.push(Episode {
            run,
            classes,
            k_shot,
            queries_per_class: queries,
            support,
            query,
            seed,
        });
    }
    Ok((episodes, excluded))
}

const STD_FLOOR: f64 = 1e-8;

/// Nearest-prototype classification of the queries. With `standardize`,
/// every dimension is z-scored with the support mean and standard
/// deviation first. Ties go to the lower class index.
pub fn proto_classify(pool: &LabeledPool, ep: &Episode, standardize: bool) -> (f64, Vec<i64>) {
    let rows = |items: &[(usize, i64)]| pool.vectors.select(Axis(0), &items.iter().map(|p| p.0).collect::<Vec<_>>());
    let mut support = rows(&ep.support);
    let mut query = rows(&ep.query);
    if standardize {
        let mean = support.mean_axis(Axis(0)).expect("nonempty support");
        let std = support.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        for x in [&mut support, &mut query] {
            *x -= &mean;
            *x /= &std;
        }
    }
    let prototypes: Vec<Array1<f64>> = ep
        .classes
        .iter()
        .map(|&c| {
            let idx: Vec<usize> = ep.support.iter().enumerate().filter(|(_, p)| p.1 == c).map(|(i, _)| i).collect();
            support.select(Axis(0), &idx).mean_axis(Axis(0)).expect("class has support")
        })
        .collect();
    let predictions: Vec<i64> = query
        .outer_iter()
        .map(|q| {
            let mut best = (f64::INFINITY, ep.classes[0]);
            for (p, &c) in prototypes.iter().zip(&ep.classes) {
                let d = (&q - p).mapv(|v| v * v).sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect();
    let correct = predictions.iter().zip(&ep.query).filter(|(p, q)| **p == q.1).count();
    (correct as f64 / ep.query.len() as f64, predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
    pub runs: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_way: 2,
            k_shot: 5,
            queries: 50,
            runs: 50,
            seed: 42,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub run: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub accuracy: f64,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotReport {
    pub runs: Vec<EpisodeResult>,
    pub mean: f64,
    /// Population standard deviation of the run accuracies.
    pub std: f64,
    pub excluded_classes: Vec<i64>,
}

pub fn evaluate_few_shot(pool: &LabeledPool, cfg: &EpisodeConfig) -> Result<FewShotReport> {
    let (episodes, excluded) = sample_episodes(pool, cfg.n_way, cfg.k_shot, cfg.queries, cfg.runs, cfg.seed)?;
    let runs: Vec<EpisodeResult> = episodes
        .iter()
        .map(|ep| EpisodeResult {
            run: ep.run,
            n_way: cfg.n_way,
            k_shot: cfg.k_shot,
            accuracy: proto_classify(pool, ep, cfg.standardize).0,
            standardize: cfg.standardize,
        })
        .collect();
    let acc: Array1<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (mean, std) = if acc.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (acc.mean().expect("nonempty"), acc.std(0.0))
    };
    Ok(FewShotReport {
        runs,
        mean,
        std,
        excluded_classes: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pool(classes: &[(i64, f64)], per_class: usize, dim: usize, seed: u64) -> LabeledPool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for &(c, center) in classes {
            for _ in 0..per_class {
                for _ in 0..dim {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    data.push(center + noise);
                }
                labels.push(c);
            }
        }
        LabeledPool::new(Array2::from_shape_vec((labels.len(), dim), data).unwrap(), labels).unwrap()
    }

    #[test]
    fn episode_counts_and_disjointness() {
        let pool = gaussian_pool(&[(0, 0.0), (1, 1.0), (2, 2.0)], 10, 3, 0);
        let (eps, excluded) = sample_episodes(&pool, 2, 1, 1, 1, 5).unwrap();
        assert_eq!((eps[0].support.len(), eps[0].query.len()), (2, 2));
        assert!(excluded.is_empty());
        let (eps, _) = sample_episodes(&pool, 3, 3, 7, 20, 5).unwrap();
        for ep in &eps {
            assert_eq!(ep.support.len(), 9);
            for (i, _) in &ep.support {
                assert!(!ep.query.iter().any(|(j, _)| j == i));
            }
            for (i, c) in ep.support.iter().chain(&ep.query) {
                assert_eq!(pool.labels[*i], *c);
                assert!(ep.classes.contains(c));
            }
        }
        assert_eq!(eps, sample_episodes(&pool, 3, 3, 7, 20, 5).unwrap().0);
    }

    #[test]
    fn insufficient_classes_are_named() {
        let pool = gaussian_pool(&[(0, 0.0), (7, 1.0)], 4, 2, 0);
        let err = sample_episodes(&pool, 2, 5, 50, 1, 0).unwrap_err().to_string();
        assert!(err.contains("class 7"), "{err}");
        let pool = gaussian_pool(&[(0, 0.0), (1, 1.0), (2, 2.0)], 12, 2, 0);
        let mut small = pool.clone();
        small.labels[0] = 9;
        let (_, excluded) = sample_episodes(&small, 2, 5, 7, 3, 0).unwrap();
        assert_eq!(excluded, vec![0, 9]);
    }

    #[test]
    fn query_on_support_point_is_classified() {
        let vectors = Array2::from_shape_vec((4, 1), vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let pool = LabeledPool::new(vectors, vec![0, 0, 1, 1]).unwrap();
        let ep = Episode {
            run: 0,
            classes: vec![0, 1],
            k_shot: 1,
            queries_per_class: 1,
            support: vec![(0, 0), (2, 1)],
            query: vec![(1, 0), (3, 1)],
            seed: 0,
        };
        assert_eq!(proto_classify(&pool, &ep, false), (1.0, vec![0, 1]));
        assert_eq!(proto_classify(&pool, &ep, true).0, 1.0);
    }

    #[test]
    fn ties_go_to_lower_class() {
        let vectors = Array2::from_shape_vec((3, 1), vec![-1.0, 1.0, 0.0]).unwrap();
        let pool = LabeledPool::new(vectors, vec![3, 5, 5]).unwrap();
        let ep = Episode {
            run: 0,
            classes: vec![3, 5],
            k_shot: 1,
            queries_per_class: 1,
            support: vec![(0, 3), (1, 5)],
            query: vec![(2, 5)],
            seed: 0,
        };
        assert_eq!(proto_classify(&pool, &ep, false).1, vec![3]);
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let pool = gaussian_pool(&[(0, 0.0), (1, 10.0)], 60, 4, 3);
        let report = evaluate_few_shot(&pool, &EpisodeConfig::default()).unwrap();
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.runs.len(), 50);
    }

    #[test]
    fn accuracy_is_rotation_invariant() {
        let pool = gaussian_pool(&[(0, 0.0), (1, 0.7)], 30, 2, 4);
        let theta: f64 = 0.83;
        let rot = Array2::from_shape_vec((2, 2), vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()]).unwrap();
        let rotated = LabeledPool::new(pool.vectors.dot(&rot), pool.labels.clone()).unwrap();
        let (eps, _) = sample_episodes(&pool, 2, 5, 10, 20, 1).unwrap();
        for ep in &eps {
            assert_eq!(proto_classify(&pool, ep, false), proto_classify(&rotated, ep, false));
        }
    }
}
