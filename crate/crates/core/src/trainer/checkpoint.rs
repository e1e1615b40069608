//! Versioned, line-oriented text checkpoints.
//!
//! ```text
//! scgfm-checkpoint 1
//! config.<field> <value>            one line per TrainConfig field
//! schema.degree_bins 8
//! schema.clustering_bins 8
//! schema.motifs triangles,c4,c5
//! schema.vec_order row-major
//! dictionary <K> <M> <temperature> <margin>
//! base <k>                          followed by M rows of M floats
//! decoder.w1 <rows> <cols>          followed by the matrix rows
//! decoder.b1 <len>                  followed by one row
//! decoder.w2 <rows> <cols>
//! decoder.b2 <len>
//! log <epochs>
//! epoch <n> <gw> <rec> <div> <total>
//! end
//! ```
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::{Map, Value};

use super::{EpochRecord, TrainConfig};
use crate::bases::BaseDictionary;
use crate::decoder::Decoder;
use crate::stats::StatSchema;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "scgfm-checkpoint";
const VEC_ORDER: &str = "row-major";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub schema: StatSchema,
    pub dictionary: BaseDictionary,
    pub decoder: Decoder,
    pub log: Vec<EpochRecord>,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(values: impl Iterator<Item = f64>) -> String {
    values.map(float).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn new(config: TrainConfig, dictionary: BaseDictionary, decoder: Decoder, log: Vec<EpochRecord>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            schema: StatSchema::default(),
            dictionary,
            decoder,
            log,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = vec![format!("{MAGIC} {}", self.version)];
        let Value::Object(fields) = serde_json::to_value(&self.config).expect("config serializes") else {
            unreachable!("config is a struct");
        };
        for (key, value) in fields {
            let text = match value {
                Value::Number(n) if n.is_f64() => float(n.as_f64().expect("f64")),
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push(format!("config.{key} {text}"));
        }
        out.push(format!("schema.degree_bins {}", self.schema.degree_bins));
        out.push(format!("schema.clustering_bins {}", self.schema.clustering_bins));
        out.push(format!("schema.motifs {}", self.schema.motifs.join(",")));
        out.push(format!("schema.vec_order {VEC_ORDER}"));
        let d = &self.dictionary;
        out.push(format!("dictionary {} {} {} {}", d.k(), d.m(), float(d.temperature()), float(d.margin())));
        for (k, b) in d.bases().iter().enumerate() {
            out.push(format!("base {k}"));
            out.extend(b.outer_iter().map(|r| row(r.iter().copied())));
        }
        let dec = &self.decoder;
        for (name, m) in [("w1", &dec.w1), ("w2", &dec.w2)] {
            out.push(format!("decoder.{name} {} {}", m.nrows(), m.ncols()));
            out.extend(m.outer_iter().map(|r| row(r.iter().copied())));
        }
        for (name, v) in [("b1", &dec.b1), ("b2", &dec.b2)] {
            out.push(format!("decoder.{name} {}", v.len()));
            out.push(row(v.iter().copied()));
        }
        out.push(format!("log {}", self.log.len()));
        for e in &self.log {
            out.push(format!(
                "epoch {} {}",
                e.epoch,
                row([e.gw, e.rec, e.div, e.total].into_iter())
            ));
        }
        out.push("end".into());
        out.join("\n") + "\n"
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Lines::new(text);
        let header = r.next_line()?;
        let version = match header.split_whitespace().collect::<Vec<_>>()[..] {
            [MAGIC, v] => v.parse::<u32>().map_err(|_| r.error(format!("bad version {v:?}")))?,
            _ => return Err(r.error("not a checkpoint file".into())),
        };
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
            )));
        }
        let mut config = Map::new();
        let mut schema = StatSchema::default();
        let dictionary_line = loop {
            let line = r.next_line()?;
            let (key, value) = line.split_once(' ').ok_or_else(|| r.error(format!("malformed line {line:?}")))?;
            if let Some(field) = key.strip_prefix("config.") {
                config.insert(field.to_string(), scalar(value));
            } else if key == "schema.degree_bins" {
                schema.degree_bins = r.parse(value)?;
            } else if key == "schema.clustering_bins" {
                schema.clustering_bins = r.parse(value)?;
            } else if key == "schema.motifs" {
                schema.motifs = value.split(',').map(str::to_string).collect();
            } else if key == "schema.vec_order" {
                if value != VEC_ORDER {
                    return Err(r.error(format!("unsupported vec order {value:?}")));
                }
            } else if key == "dictionary" {
                break value.to_string();
            } else {
                return Err(r.error(format!("unexpected key {key:?}")));
            }
        };
        if schema != StatSchema::default() {
            return Err(Error::Checkpoint(format!(
                "statistics schema {schema:?} differs from this build's {:?}",
                StatSchema::default()
            )));
        }
        let config: TrainConfig = serde_json::from_value(Value::Object(config))
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;

        let parts: Vec<&str> = dictionary_line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(r.error("dictionary header needs K M temperature margin".into()));
        }
        let (k, m): (usize, usize) = (r.parse(parts[0])?, r.parse(parts[1])?);
        let (temperature, margin): (f64, f64) = (r.parse(parts[2])?, r.parse(parts[3])?);
        let mut bases = Vec::with_capacity(k);
        for expected in 0..k {
            r.expect_header("base", &[expected])?;
            bases.push(r.matrix(m, m)?);
        }
        let dictionary =
            BaseDictionary::new(bases, temperature, margin).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let dims = r.header("decoder.w1", 2)?;
        let w1 = r.matrix(dims[0], dims[1])?;
        let dims = r.header("decoder.w2", 2)?;
        let w2 = r.matrix(dims[0], dims[1])?;
        let n = r.header("decoder.b1", 1)?[0];
        let b1 = r.vector(n)?;
        let n = r.header("decoder.b2", 1)?[0];
        let b2 = r.vector(n)?;
        let decoder = Decoder::new(w1, b1, w2, b2).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let epochs = r.header("log", 1)?[0];
        let mut log = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let line = r.next_line()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 || fields[0] != "epoch" {
                return Err(r.error(format!("malformed epoch record {line:?}")));
            }
            log.push(EpochRecord {
                epoch: r.parse(fields[1])?,
                gw: r.parse(fields[2])?,
                rec: r.parse(fields[3])?,
                div: r.parse(fields[4])?,
                total: r.parse(fields[5])?,
            });
        }
        if r.next_line()? != "end" {
            return Err(r.error("missing end marker".into()));
        }
        Ok(Checkpoint {
            version,
            config,
            schema,
            dictionary,
            decoder,
            log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn scalar(text: &str) -> Value {
    if let Ok(v) = text.parse::<u64>() {
        return Value::from(v);
    }
    if let Ok(v) = text.parse::<f64>() {
        return Value::from(v);
    }
    match text {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        s => Value::String(s.to_string()),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn error(&self, msg: String) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.line))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(Error::Checkpoint(format!("truncated after line {}", self.line))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.error(format!("cannot parse {s:?}")))
    }

    fn header(&mut self, name: &str, arity: usize) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.error(format!("expected {name}, found {line:?}")));
        }
        let values: Vec<usize> = parts.map(|p| self.parse(p)).collect::<Result<_>>()?;
        if values.len() != arity {
            return Err(self.error(format!("{name} takes {arity} numbers")));
        }
        Ok(values)
    }

    fn expect_header(&mut self, name: &str, values: &[usize]) -> Result<()> {
        if self.header(name, values.len())? != values {
            return Err(self.error(format!("expected {name} {values:?}")));
        }
        Ok(())
    }

    fn floats(&mut self, len: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values: Vec<f64> = line.split_whitespace().map(|p| self.parse(p)).collect::<Result<_>>()?;
        if values.len() != len {
            return Err(self.error(format!("expected {len} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.floats(cols)?);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized"))
    }

    fn vector(&mut self, len: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.floats(len)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::init_dictionary;
    use crate::stats::STAT_DIM;

    fn sample() -> Checkpoint {
        let dict = init_dictionary(3, 4, 5).unwrap();
        let dec = Decoder::init(3, 6, STAT_DIM, 2).unwrap();
        let log = vec![EpochRecord {
            epoch: 1,
            gw: 0.1 + 0.2,
            rec: 1.0 / 3.0,
            div: 0.0,
            total: std::f64::consts::PI,
        }];
        Checkpoint::new(TrainConfig::default(), dict, dec, log)
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let ck = sample();
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.scgfm");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_other_versions_and_truncation() {
        let text = sample().to_text();
        let bumped = text.replacen("scgfm-checkpoint 1", "scgfm-checkpoint 2", 1);
        let err = Checkpoint::from_text(&bumped).unwrap_err().to_string();
        assert!(err.contains("version 2"), "{err}");
        let cut: String = text.lines().take(40).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::from_text(&cut).is_err());
        assert!(Checkpoint::from_text("hello").is_err());
    }

    #[test]
    fn rejects_invalid_bases() {
        let text = sample().to_text();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let at = lines.iter().position(|l| l == "base 0").unwrap() + 1;
        let mut row: Vec<String> = lines[at].split(' ').map(str::to_string).collect();
        row[0] = "5.0e-1".into();
        lines[at] = row.join(" ");
        assert!(Checkpoint::from_text(&lines.join("\n")).is_err());
    }
}
