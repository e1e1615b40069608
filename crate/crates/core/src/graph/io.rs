//! Dataset ingestion.
//!
//! Two formats are supported:
//!
//! * TUDataset text directories: `DS_A.txt` (comma-separated, 1-based node
//!   pairs over the whole dataset), `DS_graph_indicator.txt` (graph id of
//!   every node), `DS_graph_labels.txt`, and optionally
//!   `DS_node_attributes.txt` or `DS_node_labels.txt`.
//! * JSON lines, one graph per line:
//!   `{"n": 3, "edges": [[0, 1], [1, 2]], "features": [[..], ..], "label": 1, "id": "g0"}`
//!   where `features`, `label`, `node_labels` and `id` are optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_ints(path: &Path, text: &str) -> Result<Vec<(usize, i64)>> {
    lines(text)
        .map(|(no, l)| {
            l.parse::<i64>()
                .map(|v| (no, v))
                .map_err(|e| parse_err(path, no, format!("expected an integer, got {l:?}: {e}")))
        })
        .collect()
}

fn parse_floats(path: &Path, no: usize, l: &str) -> Result<Vec<f64>> {
    l.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, no, format!("bad number {tok:?}: {e}")))
        })
        .collect()
}

fn dataset_prefix(dir: &Path) -> Result<(String, PathBuf)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_A.txt") {
            found.push(prefix.to_string());
        }
    }
    found.sort();
    match found.as_slice() {
        [one] => Ok((one.clone(), dir.to_path_buf())),
        [] => Err(Error::Integrity(format!(
            "{}: no *_A.txt file found",
            dir.display()
        ))),
        many => Err(Error::Integrity(format!(
            "{}: several datasets present: {many:?}",
            dir.display()
        ))),
    }
}

/// Loads every graph of a TUDataset directory.
///
/// Edges are read as undirected; the reverse copy that TU files list for
/// every edge and any self-loops are dropped. Node labels are one-hot encoded
/// over the sorted set of labels seen in the dataset when no attribute file is
/// present, and featureless datasets get a single constant feature of 1.0.
pub fn load_tu_dataset(dir: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let (name, dir) = dataset_prefix(dir.as_ref())?;
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let ind_path = file("graph_indicator");
    let indicator = parse_ints(&ind_path, &read(&ind_path)?)?;
    let node_total = indicator.len();
    let mut graph_of = Vec::with_capacity(node_total);
    let mut local = Vec::with_capacity(node_total);
    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &(no, g) in &indicator {
        if g < 1 {
            return Err(Error::Integrity(format!(
                "{}:{no}: graph id {g} must be >= 1",
                ind_path.display()
            )));
        }
        let slot = sizes.entry(g).or_insert(0);
        graph_of.push(g);
        local.push(*slot);
        *slot += 1;
    }
    let graph_ids: Vec<i64> = sizes.keys().copied().collect();

    let lab_path = file("graph_labels");
    let labels = parse_ints(&lab_path, &read(&lab_path)?)?;
    if labels.len() != graph_ids.len() {
        return Err(Error::Integrity(format!(
            "{}: {} labels for {} graphs",
            lab_path.display(),
            labels.len(),
            graph_ids.len()
        )));
    }
    let label_of: BTreeMap<i64, i64> = graph_ids
        .iter()
        .zip(&labels)
        .map(|(&g, &(_, l))| (g, l))
        .collect();

    let a_path = file("A");
    let mut edges: BTreeMap<i64, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for (no, l) in lines(&read(&a_path)?) {
        let mut parts = l.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(&a_path, no, format!("expected 'i, j', got {l:?}")));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|e| parse_err(&a_path, no, format!("bad node index {t:?}: {e}")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        for v in [a, b] {
            if v == 0 || v > node_total {
                return Err(Error::Integrity(format!(
                    "{}:{no}: node {v} outside 1..={node_total}",
                    a_path.display()
                )));
            }
        }
        let (a, b) = (a - 1, b - 1);
        if graph_of[a] != graph_of[b] {
            return Err(Error::Integrity(format!(
                "{}:{no}: edge joins graphs {} and {}",
                a_path.display(),
                graph_of[a],
                graph_of[b]
            )));
        }
        if a == b {
            continue;
        }
        let (x, y) = (local[a], local[b]);
        edges
            .entry(graph_of[a])
            .or_default()
            .insert((x.min(y), x.max(y)));
    }

    let features = node_features(&file("node_attributes"), &file("node_labels"), node_total)?;
    let mut rows: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (node, &g) in graph_of.iter().enumerate() {
        rows.entry(g).or_default().push(node);
    }

    graph_ids
        .iter()
        .map(|&g| {
            let nodes = &rows[&g];
            let x = features.select(ndarray::Axis(0), nodes);
            Graph::new(
                nodes.len(),
                edges.remove(&g).unwrap_or_default(),
                Some(x),
                Some(label_of[&g]),
                format!("{name}-{g}"),
            )
        })
        .collect()
}

fn node_features(attr: &Path, labels: &Path, nodes: usize) -> Result<Array2<f64>> {
    if attr.exists() {
        let rows: Vec<Vec<f64>> = lines(&read(attr)?)
            .map(|(no, l)| parse_floats(attr, no, l))
            .collect::<Result<_>>()?;
        if rows.len() != nodes {
            return Err(Error::Integrity(format!(
                "{}: {} rows for {nodes} nodes",
                attr.display(),
                rows.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(parse_err(attr, i + 1, format!("expected {width} attributes")));
        }
        return Ok(Array2::from_shape_vec((nodes, width), rows.concat()).expect("shape checked"));
    }
    if labels.exists() {
        let values = parse_ints(labels, &read(labels)?)?;
        if values.len() != nodes {
            return Err(Error::Integrity(format!(
                "{}: {} labels for {nodes} nodes",
                labels.display(),
                values.len()
            )));
        }
        let vocab: BTreeSet<i64> = values.iter().map(|&(_, v)| v).collect();
        let column: BTreeMap<i64, usize> = vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut x = Array2::zeros((nodes, vocab.len()));
        for (node, &(_, v)) in values.iter().enumerate() {
            x[[node, column[&v]]] = 1.0;
        }
        return Ok(x);
    }
    Ok(Array2::ones((nodes, 1)))
}

/// Writes graphs as a TUDataset directory named `name` inside `dir`.
///
/// Feature matrices, when present on every graph, go to `node_attributes`.
/// Missing labels are written as 0.
pub fn write_tu_dataset(dir: impl AsRef<Path>, name: &str, graphs: &[Graph]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut a, mut ind, mut lab, mut attr) = (String::new(), String::new(), String::new(), String::new());
    let with_features = !graphs.is_empty() && graphs.iter().all(|g| g.features().is_some());
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        for &(x, y) in g.edges() {
            let _ = writeln!(a, "{}, {}", offset + x + 1, offset + y + 1);
            let _ = writeln!(a, "{}, {}", offset + y + 1, offset + x + 1);
        }
        for _ in 0..g.node_count() {
            let _ = writeln!(ind, "{}", gi + 1);
        }
        let _ = writeln!(lab, "{}", g.label().unwrap_or(0));
        if with_features {
            for row in g.features().expect("checked").outer_iter() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(attr, "{}", cells.join(", "));
            }
        }
        offset += g.node_count();
    }
    let put = |suffix: &str, body: &str| {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };
    put("A", &a)?;
    put("graph_indicator", &ind)?;
    put("graph_labels", &lab)?;
    if with_features {
        put("node_attributes", &attr)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGraph {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

/// Loads a JSON-lines graph file. Blank lines are ignored.
pub fn load_json_graphs(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let path = path.as_ref();
    parse_json_graphs(path, &read(path)?)
}

/// Parses JSON-lines text; `origin` only labels error messages.
pub fn parse_json_graphs(origin: &Path, text: &str) -> Result<Vec<Graph>> {
    lines(text)
        .map(|(no, l)| {
            let raw: JsonGraph = serde_json::from_str(l)
                .map_err(|e| parse_err(origin, no, e.to_string()))?;
            let features = match raw.features {
                None => None,
                Some(rows) => {
                    let width = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|r| r.len() != width) {
                        return Err(Error::Integrity(format!(
                            "{}:{no}: ragged feature rows",
                            origin.display()
                        )));
                    }
                    Some(
                        Array2::from_shape_vec((rows.len(), width), rows.concat())
                            .expect("rectangular"),
                    )
                }
            };
            let id = raw.id.unwrap_or_else(|| format!("g{}", no - 1));
            Graph::new(
                raw.n,
                raw.edges.into_iter().map(|[a, b]| (a, b)),
                features,
                raw.label,
                id,
            )
            .and_then(|g| g.with_node_labels(raw.node_labels))
            .map_err(|e| match e {
                Error::Integrity(msg) => {
                    Error::Integrity(format!("{}:{no}: {msg}", origin.display()))
                }
                other => other,
            })
        })
        .collect()
}

pub fn write_json_graphs(path: impl AsRef<Path>, graphs: &[Graph]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for g in graphs {
        let raw = JsonGraph {
            n: g.node_count(),
            edges: g.edges().iter().map(|&(a, b)| [a, b]).collect(),
            features: g
                .features()
                .map(|x| x.outer_iter().map(|r| r.to_vec()).collect()),
            label: g.label(),
            node_labels: g.node_labels().map(<[i64]>::to_vec),
            id: Some(g.graph_id().to_string()),
        };
        out.push_str(&serde_json::to_string(&raw).expect("plain data serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
