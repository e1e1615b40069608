use ndarray::{Array1, Array2, Axis};

use crate::{Error, Result};

/// Marginal tolerance every solver output satisfies.
pub const MARGINAL_TOL: f64 = 1e-6;

/// A transport plan between two probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl Coupling {
    /// Checks nonnegativity and that the plan's sums match the marginals to
    /// within [`MARGINAL_TOL`].
    pub fn new(plan: Array2<f64>, row_marginal: Array1<f64>, col_marginal: Array1<f64>) -> Result<Self> {
        if plan.nrows() != row_marginal.len() || plan.ncols() != col_marginal.len() {
            return Err(Error::Shape(format!(
                "plan {:?} vs marginals {} and {}",
                plan.dim(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if let Some(v) = plan.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Integrity(format!("plan entry {v} is negative or non-finite")));
        }
        let c = Coupling {
            plan,
            row_marginal,
            col_marginal,
        };
        let err = c.marginal_error();
        if err > MARGINAL_TOL {
            return Err(Error::Integrity(format!("plan marginals off by {err:e}")));
        }
        Ok(c)
    }

    pub(crate) fn new_unchecked(plan: Array2<f64>, row_marginal: Array1<f64>, col_marginal: Array1<f64>) -> Self {
        debug_assert!(plan.nrows() == row_marginal.len() && plan.ncols() == col_marginal.len());
        Coupling {
            plan,
            row_marginal,
            col_marginal,
        }
    }

    /// Product coupling `a bᵀ`.
    pub fn product(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let plan = outer(a, b);
        Coupling::new_unchecked(plan, a.clone(), b.clone())
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    pub fn rows(&self) -> usize {
        self.plan.nrows()
    }

    pub fn cols(&self) -> usize {
        self.plan.ncols()
    }

    /// Largest absolute deviation of the plan's row or column sums from the
    /// marginals.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.plan.sum_axis(Axis(1));
        let cols = self.plan.sum_axis(Axis(0));
        let r = rows
            .iter()
            .zip(&self.row_marginal)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let c = cols
            .iter()
            .zip(&self.col_marginal)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    pub fn transpose(&self) -> Coupling {
        Coupling::new_unchecked(
            self.plan.t().to_owned(),
            self.col_marginal.clone(),
            self.row_marginal.clone(),
        )
    }
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
