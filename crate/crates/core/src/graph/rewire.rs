use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::{Error, Result};

/// Topology perturbation with fixed features: every edge, independently with
/// probability `epsilon`, is moved to a uniformly random node pair that is
/// not currently an edge. When no such pair exists (complete graph) the edge
/// stays where it is, so the edge count never changes.
pub fn rewire(g: &Graph, epsilon: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let n = g.node_count();
    let slots = n * n.saturating_sub(1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current: BTreeSet<(usize, usize)> = g.edges().iter().copied().collect();
    for &e in g.edges() {
        if rng.gen::<f64>() >= epsilon || current.len() >= slots {
            continue;
        }
        let target = draw_free_pair(n, &current, &mut rng);
        current.remove(&e);
        current.insert(target);
    }
    Ok(Graph::new(n, current, g.features().cloned(), g.label(), g.graph_id())?
        .with_node_labels(g.node_labels().map(<[i64]>::to_vec))?)
}

fn draw_free_pair<R: Rng>(n: usize, taken: &BTreeSet<(usize, usize)>, rng: &mut R) -> (usize, usize) {
    for _ in 0..64 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let e = (a.min(b), a.max(b));
        if a != b && !taken.contains(&e) {
            return e;
        }
    }
    // dense graph: enumerate what is left
    let free: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|e| !taken.contains(e))
        .collect();
    free[rng.gen_range(0..free.len())]
}
