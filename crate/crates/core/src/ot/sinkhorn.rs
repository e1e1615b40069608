//! Log-domain Sinkhorn and exact marginal repair.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::{Error, Result};

/// Dual potentials carried between calls for warm starts.
#[derive(Debug, Clone)]
pub(crate) struct Potentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

impl Potentials {
    pub fn zeros(n: usize, m: usize) -> Self {
        Potentials {
            f: Array1::zeros(n),
            g: Array1::zeros(m),
        }
    }
}

pub(crate) struct SinkhornOutput {
    pub plan: Array2<f64>,
    pub converged: bool,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic OT between `a` and `b` for `cost`, in the log domain.
///
/// Stops once the row marginal error drops below `tol`.
pub(crate) fn sinkhorn_log(
    cost: &Array2<f64>,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    potentials: &mut Potentials,
) -> Result<SinkhornOutput> {
    let (n, m) = cost.dim();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    // kernel in units of epsilon
    let kernel = cost.mapv(|c| -c / epsilon);
    let (f, g) = (&mut potentials.f, &mut potentials.g);
    let mut converged = false;
    let mut lse = vec![0.0; n];
    for iter in 0..=max_iter.max(1) {
        for (i, l) in lse.iter_mut().enumerate() {
            let k = kernel.row(i);
            *l = log_sum_exp(k.iter().zip(g.iter()).map(|(kv, gv)| kv + gv));
        }
        if iter > 0 {
            // columns are exact after the last g update; row i sums to exp(f_i + lse_i)
            let err = (0..n).map(|i| ((f[i] + lse[i]).exp() - a[i]).abs()).fold(0.0, f64::max);
            if !err.is_finite() {
                return Err(Error::Numerical(
                    "Sinkhorn produced a non-finite marginal; increase epsilon".into(),
                ));
            }
            if err < tol {
                converged = true;
                break;
            }
            if iter == max_iter.max(1) {
                break;
            }
        }
        for i in 0..n {
            f[i] = log_a[i] - lse[i];
        }
        for j in 0..m {
            let k = kernel.column(j);
            g[j] = log_b[j] - log_sum_exp(k.iter().zip(f.iter()).map(|(kv, fv)| kv + fv));
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| (kernel[[i, j]] + f[i] + g[j]).exp());
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite transport plan".into()));
    }
    Ok(SinkhornOutput { plan, converged })
}

/// Projects a nonnegative matrix onto the transport polytope of `(a, b)`:
/// rows and columns are scaled down where they exceed their target, and the
/// remaining deficit is filled with a rank-one correction. The result has
/// the requested marginals up to floating-point rounding.
pub(crate) fn round_to_marginals(plan: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    let rows = plan.sum_axis(Axis(1));
    for (mut row, (&s, &target)) in plan.outer_iter_mut().zip(rows.iter().zip(a.iter())) {
        if s > target && s > 0.0 {
            row *= target / s;
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for (mut col, (&s, &target)) in plan.axis_iter_mut(Axis(1)).zip(cols.iter().zip(b.iter())) {
        if s > target && s > 0.0 {
            col *= target / s;
        }
    }
    let err_r: Vec<f64> = plan
        .sum_axis(Axis(1))
        .iter()
        .zip(a.iter())
        .map(|(s, t)| (t - s).max(0.0))
        .collect();
    let err_c: Vec<f64> = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(b.iter())
        .map(|(s, t)| (t - s).max(0.0))
        .collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for (i, er) in err_r.iter().enumerate() {
            for (j, ec) in err_c.iter().enumerate() {
                plan[[i, j]] += er * ec / total;
            }
        }
    }
}

/// One plain Sinkhorn sweep (columns, then rows) on a nonnegative plan.
pub(crate) fn scaling_pass(plan: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    let cols = plan.sum_axis(Axis(0));
    for (mut col, (&s, &t)) in plan.axis_iter_mut(Axis(1)).zip(cols.iter().zip(b.iter())) {
        if s > 0.0 {
            col *= t / s;
        }
    }
    let rows = plan.sum_axis(Axis(1));
    for (mut row, (&s, &t)) in plan.outer_iter_mut().zip(rows.iter().zip(a.iter())) {
        if s > 0.0 {
            row *= t / s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sinkhorn_matches_marginals() {
        let cost = array![[0.0, 1.0, 0.3], [0.5, 0.2, 0.9]];
        let a = array![0.4, 0.6];
        let b = array![0.2, 0.5, 0.3];
        let mut pot = Potentials::zeros(2, 3);
        let out = sinkhorn_log(&cost, a.view(), b.view(), 0.05, 1000, 1e-12, &mut pot).unwrap();
        assert!(out.converged);
        for (s, t) in out.plan.sum_axis(Axis(1)).iter().zip(&a) {
            assert!((s - t).abs() < 1e-12);
        }
        for (s, t) in out.plan.sum_axis(Axis(0)).iter().zip(&b) {
            assert!((s - t).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_epsilon_stays_finite() {
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let a = array![0.5, 0.5];
        let mut pot = Potentials::zeros(2, 2);
        let out = sinkhorn_log(&cost, a.view(), a.view(), 1e-5, 50, 1e-9, &mut pot).unwrap();
        assert!((out.plan[[0, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rounding_restores_marginals_exactly() {
        let mut plan = array![[0.3, 0.1, 0.0], [0.05, 0.2, 0.4]];
        let a = array![0.5, 0.5];
        let b = array![0.2, 0.3, 0.5];
        round_to_marginals(&mut plan, a.view(), b.view());
        for (s, t) in plan.sum_axis(Axis(1)).iter().zip(&a) {
            assert!((s - t).abs() < 1e-15);
        }
        for (s, t) in plan.sum_axis(Axis(0)).iter().zip(&b) {
            assert!((s - t).abs() < 1e-15);
        }
        assert!(plan.iter().all(|&v| v >= 0.0));
    }
}
