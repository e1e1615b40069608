use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::{Error, Result};

/// Erdős–Rényi `G(n, p)`, deterministic in `seed`.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges, None, None, format!("er-{n}-{seed}"))
}

/// A clique on roughly half of the nodes with a path hanging off one clique node.
pub fn clique_with_tail<R: Rng>(n: usize, rng: &mut R) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParameter("clique_with_tail needs n >= 3".into()));
    }
    let clique = rng.gen_range((n / 2).max(3)..=(2 * n / 3).max(3));
    let mut edges = Vec::new();
    for i in 0..clique {
        for j in (i + 1)..clique {
            edges.push((i, j));
        }
    }
    let anchor = rng.gen_range(0..clique);
    let mut prev = anchor;
    for v in clique..n {
        edges.push((prev, v));
        prev = v;
    }
    let perm = shuffled(n, rng);
    Graph::new(n, edges, None, None, "clique-tail")?.permute(&perm)
}

/// A cycle through every node plus one or two random chords.
pub fn cycle_with_chords<R: Rng>(n: usize, rng: &mut R) -> Result<Graph> {
    if n < 4 {
        return Err(Error::InvalidParameter("cycle_with_chords needs n >= 4".into()));
    }
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let chords = rng.gen_range(1..=2);
    let mut added = 0;
    while added < chords {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let d = a.abs_diff(b);
        if d < 2 || d > n - 2 {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
            continue;
        }
        edges.push(e);
        added += 1;
    }
    let perm = shuffled(n, rng);
    Graph::new(n, edges, None, None, "cycle-chords")?.permute(&perm)
}

fn shuffled<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Parameters of the synthetic two-class corpus.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            graphs: 200,
            min_nodes: 10,
            max_nodes: 20,
            seed: 42,
        }
    }
}

/// Alternating cliques-with-tails (label 0) and cycles-with-chords (label 1).
pub fn two_topology_corpus(spec: CorpusSpec) -> Result<Vec<Graph>> {
    if spec.min_nodes < 4 || spec.max_nodes < spec.min_nodes {
        return Err(Error::InvalidParameter(format!(
            "node range [{}, {}] must satisfy 4 <= min <= max",
            spec.min_nodes, spec.max_nodes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.graphs)
        .map(|i| {
            let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
            let (g, label) = if i % 2 == 0 {
                (clique_with_tail(n, &mut rng)?, 0)
            } else {
                (cycle_with_chords(n, &mut rng)?, 1)
            };
            Ok(g.with_label(Some(label)).with_id(format!("synth-{i}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes_and_determinism() {
        assert_eq!(generate_er(6, 0.0, 1).unwrap().edge_count(), 0);
        assert_eq!(generate_er(4, 1.0, 1).unwrap().edge_count(), 6);
        let a = generate_er(30, 0.3, 9).unwrap();
        let b = generate_er(30, 0.3, 9).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(generate_er(3, 1.5, 0).is_err());
    }

    #[test]
    fn corpus_is_labeled_and_connected() {
        let corpus = two_topology_corpus(CorpusSpec {
            graphs: 20,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(corpus.len(), 20);
        for (i, g) in corpus.iter().enumerate() {
            assert_eq!(g.label(), Some((i % 2) as i64));
            assert!((10..=20).contains(&g.node_count()));
            assert!(g.degrees().iter().all(|&d| d > 0));
        }
    }
}
