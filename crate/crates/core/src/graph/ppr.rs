use super::Graph;
use crate::{Error, Result};

/// Personalized PageRank sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprConfig {
    /// Maximum number of nodes kept, center included.
    pub cap: usize,
    /// Restart probability.
    pub alpha: f64,
    /// Power-iteration steps.
    pub iterations: usize,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            cap: 100,
            alpha: 0.15,
            iterations: 50,
        }
    }
}

/// Personalized PageRank vector of `center` by power iteration started at
/// `alpha · e_center`, i.e. the PPR series truncated after `iterations`
/// walk steps. Starting from `e_center` instead leaves an undamped
/// `(1 − α)^k P^k e` term that ranks the walk frontier above nearer nodes.
/// Mass sitting on isolated nodes restarts at the center.
pub fn ppr_scores(g: &Graph, center: usize, alpha: f64, iterations: usize) -> Result<Vec<f64>> {
    let n = g.node_count();
    if center >= n {
        return Err(Error::Index {
            index: center,
            len: n,
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("restart probability {alpha} outside [0, 1]")));
    }
    let adj = g.neighbors();
    let mut x = vec![0.0; n];
    x[center] = alpha;
    let mut next = vec![0.0; n];
    for _ in 0..iterations {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut dangling = 0.0;
        for (j, nbrs) in adj.iter().enumerate() {
            if x[j] == 0.0 {
                continue;
            }
            if nbrs.is_empty() {
                dangling += x[j];
                continue;
            }
            let share = (1.0 - alpha) * x[j] / nbrs.len() as f64;
            for &i in nbrs {
                next[i] += share;
            }
        }
        next[center] += alpha + (1.0 - alpha) * dangling;
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// Ego-subgraph around `center`: the center plus the `cap - 1` highest PPR
/// scores, ties going to the lower node id. Nodes are kept in id order; the
/// label is the center's node label when the graph has node labels,
/// otherwise the graph label.
pub fn ppr_subgraph(g: &Graph, center: usize, cfg: PprConfig) -> Result<Graph> {
    if cfg.cap == 0 {
        return Err(Error::InvalidParameter("cap must be at least 1".into()));
    }
    let scores = ppr_scores(g, center, cfg.alpha, cfg.iterations)?;
    let mut order: Vec<usize> = (0..g.node_count()).filter(|&i| i != center).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(cfg.cap - 1).collect();
    keep.push(center);
    keep.sort_unstable();
    let label = g
        .node_labels()
        .map(|l| l[center])
        .or(g.label());
    Ok(g
        .induced(&keep)?
        .with_label(label)
        .with_id(format!("{}@{center}", g.graph_id())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::new(n, (0..n - 1).map(|i| (i, i + 1)), None, None, "path").unwrap()
    }

    /// Dense Gaussian-elimination solve of (I - (1 - alpha) W) x = alpha e_c.
    fn exact_ppr(g: &Graph, center: usize, alpha: f64) -> Vec<f64> {
        let n = g.node_count();
        let deg = g.degrees();
        let mut m = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            m[i][i] = 1.0;
        }
        for &(a, b) in g.edges() {
            m[a][b] -= (1.0 - alpha) / deg[b] as f64;
            m[b][a] -= (1.0 - alpha) / deg[a] as f64;
        }
        m[center][n] = alpha;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    if f != 0.0 {
                        for c in col..=n {
                            m[r][c] -= f * m[col][c];
                        }
                    }
                }
            }
        }
        (0..n).map(|i| m[i][n] / m[i][i]).collect()
    }

    #[test]
    fn small_graph_is_returned_whole() {
        let star = Graph::new(4, [(0, 1), (0, 2), (0, 3)], None, Some(2), "s").unwrap();
        let sub = ppr_subgraph(&star, 0, PprConfig::default()).unwrap();
        assert_eq!(sub.node_count(), 4);
        assert_eq!(sub.edge_count(), 3);
        assert_eq!(sub.label(), Some(2));
    }

    #[test]
    fn long_path_gives_contiguous_window() {
        let g = path(200);
        for center in [50, 100, 150] {
            let scores = ppr_scores(&g, center, 0.15, 50).unwrap();
            let sub = ppr_subgraph(&g, center, PprConfig::default()).unwrap();
            assert_eq!(sub.node_count(), 100);
            // induced subgraph of a contiguous window of a path is a path
            assert_eq!(sub.edge_count(), 99, "center {center}");
            assert!(scores[center] > 0.0);
        }
    }

    #[test]
    fn path_window_matches_exact_ppr_ranking() {
        let g = path(200);
        let exact = exact_ppr(&g, 0, 0.15);
        let mut order: Vec<usize> = (1..200).collect();
        order.sort_by(|&a, &b| exact[b].total_cmp(&exact[a]).then(a.cmp(&b)));
        let mut expected: Vec<usize> = order[..99].to_vec();
        expected.push(0);
        expected.sort_unstable();
        assert_eq!(expected, (0..100).collect::<Vec<_>>());

        let sub = ppr_subgraph(&g, 0, PprConfig::default()).unwrap();
        assert_eq!(sub.edges(), path(100).edges());

        // near the center the truncated power iteration agrees with the solve
        let approx = ppr_scores(&g, 0, 0.15, 50).unwrap();
        for i in 0..10 {
            assert!((approx[i] - exact[i]).abs() < 1e-3, "node {i}");
        }
    }

    #[test]
    fn center_is_always_kept_and_checked() {
        let g = path(10);
        let sub = ppr_subgraph(&g, 7, PprConfig { cap: 1, ..Default::default() }).unwrap();
        assert_eq!(sub.node_count(), 1);
        assert!(matches!(
            ppr_subgraph(&g, 10, PprConfig::default()),
            Err(Error::Index { index: 10, len: 10 })
        ));
    }

    #[test]
    fn node_labels_follow_the_center() {
        let g = path(5).with_node_labels(Some(vec![0, 1, 2, 3, 4])).unwrap();
        let sub = ppr_subgraph(&g, 3, PprConfig { cap: 3, ..Default::default() }).unwrap();
        assert_eq!(sub.label(), Some(3));
        assert_eq!(sub.node_labels().unwrap(), &[2, 3, 4]);
    }
}
