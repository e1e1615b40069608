//! Frozen-encoder embeddings `z = [w ‖ f(w) ‖ vec(H)]` and their file formats.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{coordinates_prepared, CoordinateResult};
use crate::graph::{to_mm_space, Graph, MmSpace};
use crate::ot::{GwSolver, Prepared};
use crate::trainer::Checkpoint;
use crate::{Error, Result};

/// `Σ_k w_k N T_kᵀ X`, with `X` restricted to the coupled support of the
/// graph and `N` the support size.
pub fn project_features(g: &Graph, space: &MmSpace, coords: &CoordinateResult) -> Result<Array2<f64>> {
    let x = g.features_or_constant();
    let support = space.support();
    let n = support.len();
    let xs = x.select(ndarray::Axis(0), support);
    let Some(first) = coords.couplings.first() else {
        return Err(Error::Shape("no couplings to project through".into()));
    };
    let m = first.cols();
    let mut h = Array2::zeros((m, x.ncols()));
    for (t, &w) in coords.couplings.iter().zip(&coords.weights) {
        if t.rows() != n || t.cols() != m {
            return Err(Error::Shape(format!(
                "coupling is {}x{}, graph support has {n} nodes and bases {m} points",
                t.rows(),
                t.cols()
            )));
        }
        h.scaled_add(w * n as f64, &t.plan().t().dot(&xs));
    }
    Ok(h)
}

/// The three blocks of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array1<f64>,
    pub decoded: Array1<f64>,
    /// `M × F`, flattened row-major in [`Embedding::to_vector`].
    pub features: Array2<f64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.len() + self.decoded.len() + self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.len());
        z.extend(self.coords.iter());
        z.extend(self.decoded.iter());
        z.extend(self.features.iter());
        z
    }
}

/// Embeds one graph against a frozen checkpoint. The couplings that give
/// the coordinates are reused for the feature block.
pub fn embed_graph(g: &Graph, ckpt: &Checkpoint, solver: &GwSolver) -> Result<Embedding> {
    let spaces = ckpt.dictionary.base_spaces();
    let bases: Vec<Prepared> = spaces.iter().map(|s| solver.prepare(s)).collect();
    embed_prepared(g, ckpt, solver, &bases)
}

fn embed_prepared(g: &Graph, ckpt: &Checkpoint, solver: &GwSolver, bases: &[Prepared]) -> Result<Embedding> {
    let space = to_mm_space(g)?;
    let coords = coordinates_prepared(&solver.prepare(&space), bases, ckpt.dictionary.temperature(), solver)?;
    let decoded = ckpt.decoder.decode(&coords.weights)?;
    let features = project_features(g, &space, &coords)?;
    Ok(Embedding {
        coords: coords.weights,
        decoded,
        features,
    })
}

/// Embeds every graph in parallel, in input order. All graphs must share a
/// feature width.
pub fn embed_graphs(graphs: &[Graph], ckpt: &Checkpoint, solver: &GwSolver) -> Result<Vec<Embedding>> {
    if let Some(first) = graphs.first() {
        let f = first.features_or_constant().ncols();
        if let Some(g) = graphs.iter().find(|g| g.features_or_constant().ncols() != f) {
            return Err(Error::Shape(format!(
                "graph {} has {} feature columns, expected {f}",
                g.graph_id(),
                g.features_or_constant().ncols()
            )));
        }
    }
    let spaces = ckpt.dictionary.base_spaces();
    let bases: Vec<Prepared> = spaces.iter().map(|s| solver.prepare(s)).collect();
    graphs
        .par_iter()
        .map(|g| {
            embed_prepared(g, ckpt, solver, &bases)
                .map_err(|e| Error::Integrity(format!("embedding graph {}: {e}", g.graph_id())))
        })
        .collect()
}

/// One exported embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub graph_id: String,
    pub label: Option<i64>,
    pub z: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(g: &Graph, e: &Embedding) -> Self {
        EmbeddingRecord {
            graph_id: g.graph_id().to_string(),
            label: g.label(),
            z: e.to_vector(),
        }
    }
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

const BINARY_MAGIC: &str = "scgfm-embeddings";
const BINARY_VERSION: u32 = 1;

/// Header line of the binary format; the payload after the newline is
/// `count × dim` little-endian `f64`, one record after another.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryHeader {
    format: String,
    version: u32,
    count: usize,
    dim: usize,
    graph_ids: Vec<String>,
    labels: Vec<Option<i64>>,
}

pub fn write_binary(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let path = path.as_ref();
    let dim = records.first().map_or(0, |r| r.z.len());
    if let Some(r) = records.iter().find(|r| r.z.len() != dim) {
        return Err(Error::Shape(format!("record {} has length {}, expected {dim}", r.graph_id, r.z.len())));
    }
    let header = BinaryHeader {
        format: BINARY_MAGIC.into(),
        version: BINARY_VERSION,
        count: records.len(),
        dim,
        graph_ids: records.iter().map(|r| r.graph_id.clone()).collect(),
        labels: records.iter().map(|r| r.label).collect(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for r in records {
        for v in &r.z {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    let header: BinaryHeader = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
    if header.format != BINARY_MAGIC || header.version != BINARY_VERSION {
        return Err(parse_err(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.graph_ids.len() != header.count || header.labels.len() != header.count {
        return Err(parse_err("header lists do not match count".into()));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != header.count * header.dim * 8 {
        return Err(Error::Integrity(format!(
            "{}: payload has {} bytes, header promises {}",
            path.display(),
            payload.len(),
            header.count * header.dim * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(header
        .graph_ids
        .into_iter()
        .zip(header.labels)
        .enumerate()
        .map(|(i, (graph_id, label))| EmbeddingRecord {
            graph_id,
            label,
            z: values[i * header.dim..(i + 1) * header.dim].to_vec(),
        })
        .collect())
}
