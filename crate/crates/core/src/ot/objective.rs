//! The squared-loss Gromov-Wasserstein functional at a fixed plan and its
//! derivative with respect to the second structure matrix.

use ndarray::{Array1, Array2, Axis};

use super::Coupling;
use crate::graph::MmSpace;
use crate::{Error, Result};

fn check_shapes(a: &MmSpace, b: &MmSpace, t: &Coupling) -> Result<()> {
    if t.rows() != a.size() || t.cols() != b.size() {
        return Err(Error::Shape(format!(
            "coupling {}x{} for spaces of size {} and {}",
            t.rows(),
            t.cols(),
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// `A * X` for the sparse structure of `a` and a dense `X` with `a.size()` rows.
pub(crate) fn sparse_left_mul(a: &MmSpace, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.size(), x.ncols()));
    for (i, row) in a.nonzeros().iter().enumerate() {
        let mut o = out.row_mut(i);
        for &(k, v) in row {
            o.scaled_add(v, &x.row(k));
        }
    }
    out
}

/// `Σ_k s_ik² p_k` for every `i`.
pub(crate) fn squared_moment(s: &MmSpace, p: &Array1<f64>) -> Array1<f64> {
    s.nonzeros()
        .iter()
        .map(|row| row.iter().map(|&(k, v)| v * v * p[k]).sum())
        .collect()
}

/// `A T B` using the sparse rows of `A`.
pub(crate) fn cross_term(a: &MmSpace, plan: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    sparse_left_mul(a, &plan.dot(b))
}

/// `Σ_{i,k,j,l} (a_ik − b_jl)² t_ij t_kl` via the expansion
/// `pᵀA²p + qᵀB²q − 2⟨ATB, T⟩` with `p, q` the plan's own marginals.
pub fn gw_cost_at(a: &MmSpace, b: &MmSpace, t: &Coupling) -> Result<f64> {
    check_shapes(a, b, t)?;
    Ok(cost_from_plan(a, b, t.plan()))
}

pub(crate) fn cost_from_plan(a: &MmSpace, b: &MmSpace, plan: &Array2<f64>) -> f64 {
    let p = plan.sum_axis(Axis(1));
    let q = plan.sum_axis(Axis(0));
    let first = squared_moment(a, &p).dot(&p);
    let second = squared_moment(b, &q).dot(&q);
    let cross = (&cross_term(a, plan, b.structure()) * plan).sum();
    (first + second - 2.0 * cross).max(0.0)
}

/// Derivative of [`gw_cost_at`] with respect to every entry of `b`'s
/// structure, the plan held fixed:
/// `2 (b_jl q_j q_l − (Tᵀ A T)_jl)`, symmetrized, with a zero diagonal.
pub fn gw_gradient_b(a: &MmSpace, b: &MmSpace, t: &Coupling) -> Result<Array2<f64>> {
    check_shapes(a, b, t)?;
    Ok(gradient_from_plan(a, b.structure(), t.plan()))
}

pub(crate) fn gradient_from_plan(a: &MmSpace, b: &Array2<f64>, plan: &Array2<f64>) -> Array2<f64> {
    let q = plan.sum_axis(Axis(0));
    let tat = plan.t().dot(&sparse_left_mul(a, plan));
    let m = b.nrows();
    let mut grad = Array2::zeros((m, m));
    for j in 0..m {
        for l in 0..m {
            if j != l {
                let gjl = b[[j, l]] * q[j] * q[l] - tat[[j, l]];
                let glj = b[[l, j]] * q[l] * q[j] - tat[[l, j]];
                grad[[j, l]] = gjl + glj;
            }
        }
    }
    grad
}
