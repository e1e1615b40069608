//! Sliced GW: spectral lift, random 1D projections, closed-form 1D GW.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sinkhorn::{round_to_marginals, scaling_pass};
use super::spectral::spectral_embed;
use super::{Coupling, GwResult};
use crate::graph::MmSpace;
use crate::{Error, Result};

pub const DEFAULT_EMBED_DIM: usize = 8;
pub const DEFAULT_SLICES: usize = 50;

/// A fixed set of unit projection directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    directions: Array2<f64>,
    seed: u64,
}

impl SliceSet {
    /// `count` directions drawn uniformly from the unit sphere of `R^dim`.
    pub fn new(count: usize, dim: usize, seed: u64) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::InvalidParameter("slice count and dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut directions = Array2::zeros((count, dim));
        for mut row in directions.outer_iter_mut() {
            loop {
                row.iter_mut().for_each(|v: &mut f64| *v = StandardNormal.sample(&mut rng));
                let norm = row.dot(&row).sqrt();
                if norm > 1e-12 {
                    row /= norm;
                    break;
                }
            }
        }
        Ok(SliceSet { directions, seed })
    }

    pub fn directions(&self) -> &Array2<f64> {
        &self.directions
    }

    pub fn count(&self) -> usize {
        self.directions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Sparse 1D coupling in sorted index space.
struct Sparse1d {
    cost: f64,
    entries: Vec<(usize, usize, f64)>,
}

/// North-west-corner coupling of two weight vectors, `y` walked in reverse
/// when `reverse` is set (anti-monotone).
fn north_west(wx: &[f64], wy: &[f64], reverse: bool) -> Vec<(usize, usize, f64)> {
    let (n, m) = (wx.len(), wy.len());
    let col = |j: usize| if reverse { m - 1 - j } else { j };
    let mut out = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wx[0], wy[col(0)]);
    loop {
        let mass = ra.min(rb);
        if mass > 0.0 {
            out.push((i, col(j), mass));
        }
        ra -= mass;
        rb -= mass;
        if ra <= rb {
            i += 1;
            if i == n {
                break;
            }
            ra = wx[i];
        } else {
            j += 1;
            if j == m {
                break;
            }
            rb = wy[col(j)];
        }
    }
    out
}

/// Weighted centered second moment.
fn variance(x: &[f64], w: &[f64]) -> f64 {
    let mean: f64 = x.iter().zip(w).map(|(v, p)| v * p).sum();
    x.iter().zip(w).map(|(v, p)| p * (v - mean) * (v - mean)).sum()
}

/// Covariance of `(x_i, y_j)` under a sparse plan.
fn plan_covariance(x: &[f64], y: &[f64], entries: &[(usize, usize, f64)]) -> f64 {
    let (mut mx, mut my) = (0.0, 0.0);
    for &(i, j, w) in entries {
        mx += w * x[i];
        my += w * y[j];
    }
    entries
        .iter()
        .map(|&(i, j, w)| w * (x[i] - mx) * (y[j] - my))
        .sum()
}

/// Both candidate couplings are comonotone (resp. countermonotone) along
/// their support, so `|Δx||Δy| = ±ΔxΔy` and the quadratic objective with
/// structures `|x_i − x_k|`, `|y_j − y_l|` reduces to
/// `2 Var(x) + 2 Var(y) − 4 |Cov_T(x, y)|`.
fn gw_1d_sparse(x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> Sparse1d {
    let base = 2.0 * variance(x, wx) + 2.0 * variance(y, wy);
    let mono = north_west(wx, wy, false);
    let anti = north_west(wx, wy, true);
    let c_mono = (base - 4.0 * plan_covariance(x, y, &mono).abs()).max(0.0);
    let c_anti = (base - 4.0 * plan_covariance(x, y, &anti).abs()).max(0.0);
    if c_mono <= c_anti {
        Sparse1d {
            cost: c_mono,
            entries: mono,
        }
    } else {
        Sparse1d {
            cost: c_anti,
            entries: anti,
        }
    }
}

fn check_support(x: &[f64], w: &[f64], name: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidParameter(format!("{name}: empty support")));
    }
    if x.len() != w.len() {
        return Err(Error::Shape(format!("{name}: {} points, {} weights", x.len(), w.len())));
    }
    if x.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::InvalidParameter(format!("{name}: support is not sorted")));
    }
    crate::graph::check_probability(w)
}

/// Quadratic GW between two weighted point sets on the line, with pairwise
/// absolute differences as structures, restricted to the monotone and
/// anti-monotone north-west-corner couplings.
pub fn gw_1d(x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> Result<(f64, Coupling)> {
    check_support(x, wx, "x")?;
    check_support(y, wy, "y")?;
    let sol = gw_1d_sparse(x, wx, y, wy);
    let mut plan = Array2::zeros((x.len(), y.len()));
    for (i, j, w) in sol.entries {
        plan[[i, j]] += w;
    }
    Ok((
        sol.cost,
        Coupling::new_unchecked(plan, Array1::from(wx.to_vec()), Array1::from(wy.to_vec())),
    ))
}

/// A space together with its spectral coordinates.
#[derive(Debug, Clone)]
pub struct Lifted<'a> {
    pub space: &'a MmSpace,
    pub coords: Array2<f64>,
}

impl<'a> Lifted<'a> {
    pub fn new(space: &'a MmSpace, dim: usize) -> Self {
        Lifted {
            space,
            coords: spectral_embed(space, dim),
        }
    }
}

pub fn sliced_gw(a: &MmSpace, b: &MmSpace, slices: &SliceSet) -> Result<GwResult> {
    let la = Lifted::new(a, slices.dim());
    let lb = Lifted::new(b, slices.dim());
    sliced_gw_lifted(&la, &lb, slices)
}

/// Sorted projection of lifted coordinates onto `theta`, ties by index.
fn project_sorted(coords: &Array2<f64>, theta: ndarray::ArrayView1<f64>, measure: &Array1<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let proj = coords.dot(&theta);
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&i, &j| proj[i].total_cmp(&proj[j]).then(i.cmp(&j)));
    let xs = order.iter().map(|&i| proj[i]).collect();
    let ws = order.iter().map(|&i| measure[i]).collect();
    (order, xs, ws)
}

/// Sliced GW on pre-lifted spaces.
///
/// The cost is the mean 1D cost over slices. The coupling averages the
/// per-slice plans in original indices; rows are rescaled to `a`'s measure,
/// one Sinkhorn sweep is applied and the result is rounded onto the exact
/// marginals.
pub fn sliced_gw_lifted(a: &Lifted, b: &Lifted, slices: &SliceSet) -> Result<GwResult> {
    for (name, l) in [("first", a), ("second", b)] {
        if l.coords.ncols() != slices.dim() {
            return Err(Error::Shape(format!(
                "{name} space lifted to {} dims, slices live in {}",
                l.coords.ncols(),
                slices.dim()
            )));
        }
    }
    let (p, q) = (a.space.measure(), b.space.measure());
    let (n, m) = (p.len(), q.len());
    let mut plan = Array2::zeros((n, m));
    let mut total = 0.0;
    for theta in slices.directions().outer_iter() {
        let (oa, xa, wa) = project_sorted(&a.coords, theta, p);
        let (ob, xb, wb) = project_sorted(&b.coords, theta, q);
        let sol = gw_1d_sparse(&xa, &wa, &xb, &wb);
        total += sol.cost;
        for (i, j, w) in sol.entries {
            plan[[oa[i], ob[j]]] += w;
        }
    }
    let l = slices.count() as f64;
    plan /= l;
    for (mut row, &target) in plan.outer_iter_mut().zip(p.iter()) {
        let s = row.sum();
        if s > 0.0 {
            row *= target / s;
        }
    }
    scaling_pass(&mut plan, p.view(), q.view());
    round_to_marginals(&mut plan, p.view(), q.view());
    let cost = total / l;
    if !cost.is_finite() {
        return Err(Error::Numerical("sliced GW cost is not finite".into()));
    }
    Ok(GwResult {
        cost,
        coupling: Coupling::new_unchecked(plan, p.clone(), q.clone()),
        converged: true,
        iterations: slices.count(),
    })
}
