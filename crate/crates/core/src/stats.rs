//! Graph-level statistics used as reconstruction targets: a degree
//! histogram, a local-clustering histogram and log-scaled cycle counts.

use ndarray::{Array1, Array2};

use crate::graph::Graph;

pub const DEGREE_BINS: usize = 8;
pub const CLUSTERING_BINS: usize = 8;
pub const MOTIFS: [&str; 3] = ["triangles", "c4", "c5"];
/// Length of a [`StatVector`].
pub const STAT_DIM: usize = DEGREE_BINS + CLUSTERING_BINS + MOTIFS.len();

/// Layout of the statistics vector, recorded in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatSchema {
    pub degree_bins: usize,
    pub clustering_bins: usize,
    pub motifs: Vec<String>,
}

impl Default for StatSchema {
    fn default() -> Self {
        StatSchema {
            degree_bins: DEGREE_BINS,
            clustering_bins: CLUSTERING_BINS,
            motifs: MOTIFS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl StatSchema {
    pub fn dim(&self) -> usize {
        self.degree_bins + self.clustering_bins + self.motifs.len()
    }
}

/// `[degree histogram (8) | clustering histogram (8) | ln(1+T)/N, ln(1+C4)/N, ln(1+C5)/N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatVector(pub Array1<f64>);

impl StatVector {
    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn degree_histogram(&self) -> &[f64] {
        &self.0.as_slice().expect("contiguous")[..DEGREE_BINS]
    }

    pub fn clustering_histogram(&self) -> &[f64] {
        &self.0.as_slice().expect("contiguous")[DEGREE_BINS..DEGREE_BINS + CLUSTERING_BINS]
    }

    pub fn motif_features(&self) -> &[f64] {
        &self.0.as_slice().expect("contiguous")[DEGREE_BINS + CLUSTERING_BINS..]
    }
}

/// Simple cycle counts of length 3, 4 and 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotifCounts {
    pub triangles: u64,
    pub c4: u64,
    pub c5: u64,
}

/// `A·X` for integer `X`, using neighbor lists.
fn adj_mul(adj: &[Vec<usize>], x: &Array2<i64>) -> Array2<i64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (i, nbrs) in adj.iter().enumerate() {
        let mut row = out.row_mut(i);
        for &k in nbrs {
            row += &x.row(k);
        }
    }
    out
}

struct Walks {
    /// Closed 3-walks per node, `(A³)_ii`.
    closed3: Vec<i64>,
    tr3: i64,
    tr4: i64,
    tr5: i64,
}

fn walks(g: &Graph) -> Walks {
    let n = g.node_count();
    let adj = g.neighbors();
    let mut a = Array2::<i64>::zeros((n, n));
    for &(i, j) in g.edges() {
        a[[i, j]] = 1;
        a[[j, i]] = 1;
    }
    let a2 = adj_mul(&adj, &a);
    let a3 = adj_mul(&adj, &a2);
    let closed3: Vec<i64> = (0..n).map(|i| a3[[i, i]]).collect();
    let tr3 = closed3.iter().sum();
    // tr(A⁴) = ‖A²‖_F², tr(A⁵) = ⟨A², A³⟩ for symmetric A
    let tr4 = a2.iter().map(|v| v * v).sum();
    let tr5 = a2.iter().zip(a3.iter()).map(|(x, y)| x * y).sum();
    Walks {
        closed3,
        tr3,
        tr4,
        tr5,
    }
}

/// Triangles, 4-cycles and 5-cycles from closed-walk traces with the
/// standard corrections for walks that backtrack:
///
/// * `T  = tr(A³) / 6`
/// * `C4 = (tr(A⁴) − 2 Σ d_i² + 2|E|) / 8`
/// * `C5 = (tr(A⁵) − 5 tr(A³) − 5 Σ_i (d_i − 2)(A³)_ii) / 10`
pub fn count_motifs(g: &Graph) -> MotifCounts {
    let w = walks(g);
    let deg = g.degrees();
    let m = g.edge_count() as i64;
    let sum_d2: i64 = deg.iter().map(|&d| (d * d) as i64).sum();
    let c4 = (w.tr4 - 2 * sum_d2 + 2 * m) / 8;
    let corr: i64 = deg
        .iter()
        .zip(&w.closed3)
        .map(|(&d, &c)| (d as i64 - 2) * c)
        .sum();
    let c5 = (w.tr5 - 5 * w.tr3 - 5 * corr) / 10;
    MotifCounts {
        triangles: (w.tr3 / 6) as u64,
        c4: c4 as u64,
        c5: c5 as u64,
    }
}

/// Uniform bins on `[0, 1]`, last bin closed on the right.
fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let mut count = 0usize;
    for v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1.0;
        count += 1;
    }
    if count > 0 {
        h.iter_mut().for_each(|x| *x /= count as f64);
    }
    h
}

/// The statistics target of a graph.
pub fn feature_extract(g: &Graph) -> StatVector {
    let n = g.node_count();
    let deg = g.degrees();
    let w = walks(g);
    let norm = (n.saturating_sub(1)).max(1) as f64;
    let degree_hist = histogram(deg.iter().map(|&d| d as f64 / norm), DEGREE_BINS);
    let clustering = deg.iter().zip(&w.closed3).map(|(&d, &c)| {
        if d < 2 {
            0.0
        } else {
            // (A³)_ii counts each triangle at i twice
            c as f64 / (d * (d - 1)) as f64
        }
    });
    let clustering_hist = histogram(clustering, CLUSTERING_BINS);
    let counts = count_motifs(g);
    let nf = n.max(1) as f64;
    let motifs = [counts.triangles, counts.c4, counts.c5].map(|c| (1.0 + c as f64).ln() / nf);
    let mut values = Vec::with_capacity(STAT_DIM);
    values.extend(degree_hist);
    values.extend(clustering_hist);
    values.extend(motifs);
    StatVector(Array1::from(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn cycle(n: usize) -> Graph {
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)), None, None, "c").unwrap()
    }

    #[test]
    fn single_cycles() {
        let k3 = cycle(3);
        assert_eq!(count_motifs(&k3), MotifCounts { triangles: 1, c4: 0, c5: 0 });
        assert_eq!(count_motifs(&cycle(4)), MotifCounts { triangles: 0, c4: 1, c5: 0 });
        assert_eq!(count_motifs(&cycle(5)), MotifCounts { triangles: 0, c4: 0, c5: 1 });
    }

    #[test]
    fn k3_statistics() {
        let fe = feature_extract(&cycle(3));
        assert_eq!(fe.clustering_histogram()[CLUSTERING_BINS - 1], 1.0);
        assert_eq!(fe.degree_histogram()[DEGREE_BINS - 1], 1.0);
        assert!((fe.motif_features()[0] - 2f64.ln() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn k4_statistics() {
        let k4 = generate_er(4, 1.0, 0).unwrap();
        let c = count_motifs(&k4);
        assert_eq!((c.triangles, c.c4, c.c5), (4, 3, 0));
        let fe = feature_extract(&k4);
        assert!((fe.motif_features()[0] - 5f64.ln() / 4.0).abs() < 1e-15);
        assert!((fe.motif_features()[1] - 4f64.ln() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn edgeless_statistics() {
        let g = Graph::new(5, [], None, None, "e").unwrap();
        let fe = feature_extract(&g);
        assert_eq!(fe.degree_histogram()[0], 1.0);
        assert_eq!(fe.clustering_histogram()[0], 1.0);
        assert!(fe.motif_features().iter().all(|&v| v == 0.0));
        assert_eq!(fe.values().len(), STAT_DIM);
    }

    #[test]
    fn k5_has_twelve_five_cycles() {
        let k5 = generate_er(5, 1.0, 0).unwrap();
        assert_eq!(count_motifs(&k5), MotifCounts { triangles: 10, c4: 15, c5: 12 });
    }

    /// Cycles through exactly the nodes of every `len`-subset, counted by
    /// walking orderings that start at the subset minimum.
    fn brute_force_cycles(g: &Graph, len: usize) -> u64 {
        fn extend(g: &Graph, set: &[usize], path: &mut Vec<usize>, used: &mut [bool], count: &mut u64) {
            let last = *path.last().unwrap();
            if path.len() == set.len() {
                if g.has_edge(last, path[0]) {
                    *count += 1;
                }
                return;
            }
            for (k, &v) in set.iter().enumerate() {
                if !used[k] && g.has_edge(last, v) {
                    used[k] = true;
                    path.push(v);
                    extend(g, set, path, used, count);
                    path.pop();
                    used[k] = false;
                }
            }
        }
        let n = g.node_count();
        let mut total = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != len {
                continue;
            }
            let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let mut used = vec![false; len];
            used[0] = true;
            let mut directed = 0;
            extend(g, &set, &mut vec![set[0]], &mut used, &mut directed);
            total += directed / 2;
        }
        total
    }

    #[test]
    fn motif_counts_match_subset_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let n = rng.gen_range(1..=8);
            let g = generate_er(n, rng.gen_range(0.1..0.9), rng.gen()).unwrap();
            let expected = MotifCounts {
                triangles: brute_force_cycles(&g, 3),
                c4: brute_force_cycles(&g, 4),
                c5: brute_force_cycles(&g, 5),
            };
            assert_eq!(count_motifs(&g), expected, "{:?}", g.edges());
        }
    }

    #[test]
    fn statistics_ignore_node_order() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..50 {
            let g = generate_er(12, 0.35, seed).unwrap();
            let mut perm: Vec<usize> = (0..12).collect();
            perm.shuffle(&mut rng);
            let h = g.permute(&perm).unwrap();
            assert_eq!(count_motifs(&g), count_motifs(&h));
            let (a, b) = (feature_extract(&g), feature_extract(&h));
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
