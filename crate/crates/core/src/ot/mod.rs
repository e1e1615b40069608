//! Gromov-Wasserstein solvers.
//!
//! * [`exact_gw`]: permutation enumeration, small uniform instances only.
//! * [`entropic_gw`]: alternating linearization + log-domain Sinkhorn.
//! * [`sliced_gw`]: spectral lift, random 1D slices, closed-form 1D GW.
//!
//! All solvers report the squared-loss objective
//! `Σ (a_ik − b_jl)² T_ij T_kl` (or its 1D analogue for slices).

mod coupling;
mod entropic;
mod exact;
mod objective;
mod sinkhorn;
mod sliced;
mod spectral;

use std::sync::Arc;

pub use coupling::{Coupling, MARGINAL_TOL};
pub use entropic::{entropic_gw, EntropicOptions};
pub use exact::{exact_gw, EXACT_MAX_SIZE};
pub use objective::{gw_cost_at, gw_gradient_b};
pub use sliced::{gw_1d, sliced_gw, sliced_gw_lifted, Lifted, SliceSet, DEFAULT_EMBED_DIM, DEFAULT_SLICES};
pub use spectral::spectral_embed;

use crate::graph::MmSpace;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GwResult {
    pub cost: f64,
    pub coupling: Coupling,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Entropic,
    Sliced,
    Exact,
}

impl std::str::FromStr for SolverKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropic" => Ok(SolverKind::Entropic),
            "sliced" => Ok(SolverKind::Sliced),
            "exact" => Ok(SolverKind::Exact),
            other => Err(crate::Error::InvalidParameter(format!(
                "unknown solver {other:?} (expected entropic, sliced or exact)"
            ))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Entropic => "entropic",
            SolverKind::Sliced => "sliced",
            SolverKind::Exact => "exact",
        })
    }
}

/// A configured GW solver.
#[derive(Debug, Clone)]
pub struct GwSolver {
    pub kind: SolverKind,
    pub entropic: EntropicOptions,
    pub slices: Arc<SliceSet>,
}

impl GwSolver {
    pub fn new(kind: SolverKind, entropic: EntropicOptions, slices: SliceSet) -> Self {
        GwSolver {
            kind,
            entropic,
            slices: Arc::new(slices),
        }
    }

    pub fn entropic(opts: EntropicOptions) -> Self {
        Self::new(
            SolverKind::Entropic,
            opts,
            SliceSet::new(DEFAULT_SLICES, DEFAULT_EMBED_DIM, 0).expect("valid defaults"),
        )
    }

    pub fn sliced(slices: SliceSet) -> Self {
        Self::new(SolverKind::Sliced, EntropicOptions::default(), slices)
    }

    pub fn exact() -> Self {
        Self::new(
            SolverKind::Exact,
            EntropicOptions::default(),
            SliceSet::new(1, 1, 0).expect("valid"),
        )
    }

    /// Precomputes whatever per-space data the solver needs.
    pub fn prepare<'a>(&self, space: &'a MmSpace) -> Prepared<'a> {
        match self.kind {
            SolverKind::Sliced => Prepared::Lifted(Lifted::new(space, self.slices.dim())),
            _ => Prepared::Plain(space),
        }
    }

    pub fn solve(&self, a: &MmSpace, b: &MmSpace) -> Result<GwResult> {
        self.solve_prepared(&self.prepare(a), &self.prepare(b))
    }

    pub fn solve_prepared(&self, a: &Prepared, b: &Prepared) -> Result<GwResult> {
        match (self.kind, a, b) {
            (SolverKind::Sliced, Prepared::Lifted(la), Prepared::Lifted(lb)) => {
                sliced_gw_lifted(la, lb, &self.slices)
            }
            (SolverKind::Sliced, _, _) => sliced_gw(a.space(), b.space(), &self.slices),
            (SolverKind::Entropic, _, _) => entropic_gw(a.space(), b.space(), &self.entropic),
            (SolverKind::Exact, _, _) => exact_gw(a.space(), b.space()),
        }
    }
}

/// A space ready for a particular solver.
#[derive(Debug, Clone)]
pub enum Prepared<'a> {
    Plain(&'a MmSpace),
    Lifted(Lifted<'a>),
}

impl<'a> Prepared<'a> {
    pub fn space(&self) -> &'a MmSpace {
        match self {
            Prepared::Plain(s) => s,
            Prepared::Lifted(l) => l.space,
        }
    }
}
