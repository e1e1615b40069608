//! Structure-centric graph representations.
//!
//! Graphs are turned into metric measure spaces and compared against a
//! trainable dictionary of small geometric bases with Gromov-Wasserstein
//! transport. The softmax of the negative discrepancies gives every graph a
//! set of structural coordinates; together with decoded graph statistics and
//! transport-projected node features they form a fixed-size embedding that
//! a prototypical few-shot classifier consumes.

pub mod bases;
pub mod decoder;
pub mod diagnostics;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ot;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
