//! Graphs, their metric-measure-space view, ingestion and sampling.

mod generate;
mod io;
mod ppr;
mod rewire;

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use crate::{Error, Result};

pub use generate::{
    clique_with_tail, cycle_with_chords, generate_er, two_topology_corpus, CorpusSpec,
};
pub use io::{load_json_graphs, load_tu_dataset, parse_json_graphs, write_json_graphs, write_tu_dataset};
pub use ppr::{ppr_scores, ppr_subgraph, PprConfig};
pub use rewire::rewire;

/// Tolerance on the total mass of a measure.
pub const MEASURE_TOL: f64 = 1e-9;

/// An undirected simple graph with optional node features and a class label.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    features: Option<Array2<f64>>,
    label: Option<i64>,
    node_labels: Option<Vec<i64>>,
    graph_id: String,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges, out-of-range
    /// endpoints and feature matrices with the wrong row count.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Option<Array2<f64>>,
        label: Option<i64>,
        graph_id: impl Into<String>,
    ) -> Result<Self> {
        let graph_id = graph_id.into();
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Integrity(format!(
                    "graph {graph_id}: edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::Integrity(format!(
                    "graph {graph_id}: self-loop on node {a}"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Integrity(format!(
                    "graph {graph_id}: duplicate edge ({}, {})",
                    e.0, e.1
                )));
            }
        }
        if let Some(x) = &features {
            if x.nrows() != node_count {
                return Err(Error::Integrity(format!(
                    "graph {graph_id}: feature matrix has {} rows for {node_count} nodes",
                    x.nrows()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!(
                    "graph {graph_id}: non-finite feature value"
                )));
            }
        }
        Ok(Graph {
            node_count,
            edges: seen.into_iter().collect(),
            features,
            label,
            node_labels: None,
            graph_id,
        })
    }

    /// Like [`Graph::new`] but silently drops self-loops and repeated edges.
    pub fn from_edges_lossy(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        graph_id: impl Into<String>,
    ) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Graph::new(node_count, set, None, None, graph_id)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    /// Per-node class labels, used by node-level tasks.
    pub fn node_labels(&self) -> Option<&[i64]> {
        self.node_labels.as_deref()
    }

    pub fn with_node_labels(mut self, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.node_count {
                return Err(Error::Integrity(format!(
                    "graph {}: {} node labels for {} nodes",
                    self.graph_id,
                    l.len(),
                    self.node_count
                )));
            }
        }
        self.node_labels = labels;
        Ok(self)
    }

    pub fn graph_id(&self) -> &str {
        &self.graph_id
    }

    pub fn with_label(mut self, label: Option<i64>) -> Self {
        self.label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.graph_id = id.into();
        self
    }

    pub fn with_features(mut self, features: Option<Array2<f64>>) -> Result<Self> {
        if let Some(x) = &features {
            if x.nrows() != self.node_count {
                return Err(Error::Integrity(format!(
                    "graph {}: feature matrix has {} rows for {} nodes",
                    self.graph_id,
                    x.nrows(),
                    self.node_count
                )));
            }
        }
        self.features = features;
        Ok(self)
    }

    /// Feature matrix, or the constant single-column fallback when absent.
    pub fn features_or_constant(&self) -> Array2<f64> {
        match &self.features {
            Some(x) => x.clone(),
            None => Array2::ones((self.node_count, 1)),
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let e = (a.min(b), a.max(b));
        self.edges.binary_search(&e).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.node_count;
        let mut a = Array2::zeros((n, n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count;
        if perm.len() != n || {
            let mut seen = vec![false; n];
            perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        } {
            return Err(Error::InvalidParameter(
                "permutation must be a bijection of the node set".into(),
            ));
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b]));
        let features = self.features.as_ref().map(|x| {
            let mut y = Array2::zeros(x.raw_dim());
            for (i, row) in x.outer_iter().enumerate() {
                y.row_mut(perm[i]).assign(&row);
            }
            y
        });
        let node_labels = self.node_labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for (i, &v) in l.iter().enumerate() {
                out[perm[i]] = v;
            }
            out
        });
        Graph::new(n, edges, features, self.label, self.graph_id.clone())?
            .with_node_labels(node_labels)
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; self.node_count];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.node_count {
                return Err(Error::Index {
                    index: old,
                    len: self.node_count,
                });
            }
            index[old] = new;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(a, b)| index[a] != usize::MAX && index[b] != usize::MAX)
            .map(|&(a, b)| (index[a], index[b]))
            .collect();
        let features = self.features.as_ref().map(|x| x.select(ndarray::Axis(0), nodes));
        let node_labels = self
            .node_labels
            .as_ref()
            .map(|l| nodes.iter().map(|&i| l[i]).collect());
        Graph::new(nodes.len(), edges, features, self.label, self.graph_id.clone())?
            .with_node_labels(node_labels)
    }
}

/// A finite metric measure space: a symmetric hollow structure matrix with
/// entries in `[0, 1]` and a probability measure over its points.
#[derive(Debug, Clone, PartialEq)]
pub struct MmSpace {
    structure: Array2<f64>,
    measure: Array1<f64>,
    /// Original node id of every support point.
    support: Vec<usize>,
    /// Nonzero off-diagonal structure entries per row.
    nonzeros: Vec<Vec<(usize, f64)>>,
}

impl MmSpace {
    pub fn new(structure: Array2<f64>, measure: Array1<f64>) -> Result<Self> {
        let support = (0..measure.len()).collect();
        Self::with_support(structure, measure, support)
    }

    /// Space with the uniform measure over its points.
    pub fn uniform(structure: Array2<f64>) -> Result<Self> {
        let n = structure.nrows();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        Self::new(structure, Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn with_support(
        structure: Array2<f64>,
        measure: Array1<f64>,
        support: Vec<usize>,
    ) -> Result<Self> {
        let n = structure.nrows();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if structure.ncols() != n || measure.len() != n || support.len() != n {
            return Err(Error::Shape(format!(
                "structure {:?}, measure {}, support {}",
                structure.dim(),
                measure.len(),
                support.len()
            )));
        }
        for i in 0..n {
            if structure[[i, i]] != 0.0 {
                return Err(Error::Integrity(format!("structure[{i}][{i}] is not zero")));
            }
            for j in (i + 1)..n {
                let v = structure[[i, j]];
                if v != structure[[j, i]] {
                    return Err(Error::Integrity(format!(
                        "structure is not symmetric at ({i}, {j})"
                    )));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Integrity(format!(
                        "structure[{i}][{j}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        check_probability(measure.as_slice().expect("contiguous"))?;
        let nonzeros = structure
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Ok(MmSpace {
            structure,
            measure,
            support,
            nonzeros,
        })
    }

    pub fn size(&self) -> usize {
        self.measure.len()
    }

    pub fn structure(&self) -> &Array2<f64> {
        &self.structure
    }

    pub fn measure(&self) -> &Array1<f64> {
        &self.measure
    }

    /// Maps support point `i` back to its node id in the source graph.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn nonzeros(&self) -> &[Vec<(usize, f64)>] {
        &self.nonzeros
    }

    pub fn nnz(&self) -> usize {
        self.nonzeros.iter().map(Vec::len).sum()
    }

    /// `structure * v` using the sparse row lists.
    pub(crate) fn structure_matvec(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.nonzeros) {
            *o = row.iter().map(|&(j, a)| a * v[j]).sum();
        }
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.size() as f64;
        self.measure.iter().all(|&m| (m - u).abs() <= MEASURE_TOL)
    }
}

pub(crate) fn check_probability(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Integrity("measure has a negative or non-finite entry".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MEASURE_TOL {
        return Err(Error::Integrity(format!("measure sums to {total}, not 1")));
    }
    Ok(())
}

/// Converts a graph to its adjacency metric measure space with the degree
/// measure.
///
/// Isolated nodes carry zero mass and are dropped from the support unless the
/// graph has no edges at all, in which case every node is kept with uniform
/// mass.
pub fn to_mm_space(g: &Graph) -> Result<MmSpace> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let deg = g.degrees();
    let total: usize = deg.iter().sum();
    if total == 0 {
        return MmSpace::with_support(
            Array2::zeros((n, n)),
            Array1::from_elem(n, 1.0 / n as f64),
            (0..n).collect(),
        );
    }
    let support: Vec<usize> = (0..n).filter(|&i| deg[i] > 0).collect();
    let mut index = vec![usize::MAX; n];
    for (new, &old) in support.iter().enumerate() {
        index[old] = new;
    }
    let s = support.len();
    let mut structure = Array2::zeros((s, s));
    let mut nonzeros = vec![Vec::new(); s];
    for &(a, b) in g.edges() {
        let (i, j) = (index[a], index[b]);
        structure[[i, j]] = 1.0;
        structure[[j, i]] = 1.0;
        nonzeros[i].push((j, 1.0));
        nonzeros[j].push((i, 1.0));
    }
    for row in &mut nonzeros {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    let measure = support
        .iter()
        .map(|&i| deg[i] as f64 / total as f64)
        .collect::<Array1<f64>>();
    // Skips the O(n^2) validation pass: adjacency is symmetric 0/1 by construction.
    Ok(MmSpace {
        structure,
        measure,
        support,
        nonzeros,
    })
}
