//! Spectral coordinates of a structure matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::MmSpace;

/// Above this size the embedding switches from a dense eigendecomposition
/// to block subspace iteration on the sparse structure.
pub const DENSE_LIMIT: usize = 256;

const SUBSPACE_OVERSAMPLE: usize = 8;
const SUBSPACE_SWEEPS: usize = 100;

/// `size × d` coordinates: the `d` eigenpairs of largest `|λ|`, column `j`
/// being `v_j √|λ_j|`. Columns beyond the matrix size are zero. Each
/// eigenvector is oriented so that its largest-magnitude entry (lowest index
/// on ties) is positive.
pub fn spectral_embed(a: &MmSpace, d: usize) -> Array2<f64> {
    let n = a.size();
    let pairs = if n <= DENSE_LIMIT {
        dense_top_pairs(a.structure(), d)
    } else {
        subspace_top_pairs(a, d)
    };
    let mut out = Array2::zeros((n, d));
    for (col, (lambda, mut v)) in pairs.into_iter().enumerate().take(d) {
        orient(&mut v);
        let scale = lambda.abs().sqrt();
        for i in 0..n {
            out[[i, col]] = v[i] * scale;
        }
    }
    out
}

fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sorted_pairs(values: &[f64], vectors: impl Fn(usize) -> Vec<f64>, d: usize) -> Vec<(f64, Vec<f64>)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[y].abs().total_cmp(&values[x].abs()).then(x.cmp(&y)));
    order.into_iter().take(d).map(|k| (values[k], vectors(k))).collect()
}

fn dense_top_pairs(s: &Array2<f64>, d: usize) -> Vec<(f64, Vec<f64>)> {
    let n = s.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| s[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    sorted_pairs(&values, |k| eig.eigenvectors.column(k).iter().copied().collect(), d)
}

/// Orthonormalizes the columns of `q` in place (modified Gram-Schmidt);
/// collapsed columns are replaced by fresh random directions.
fn orthonormalize(q: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (n, b) = q.dim();
    for j in 0..b {
        for _attempt in 0..4 {
            for k in 0..j {
                let dot = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-dot, &qk);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm > 1e-10 {
                q.column_mut(j).mapv_inplace(|v| v / norm);
                break;
            }
            for i in 0..n {
                q[[i, j]] = StandardNormal.sample(rng);
            }
        }
    }
}

fn rayleigh_ritz(a: &MmSpace, q: &Array2<f64>, d: usize) -> Vec<(f64, Vec<f64>)> {
    let aq = super::objective::sparse_left_mul(a, q);
    let t = q.t().dot(&aq);
    let b = t.nrows();
    let m = DMatrix::from_fn(b, b, |i, j| 0.5 * (t[[i, j]] + t[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    sorted_pairs(
        &values,
        |k| {
            let y = eig.eigenvectors.column(k);
            (0..q.nrows())
                .map(|i| (0..b).map(|c| q[[i, c]] * y[c]).sum())
                .collect()
        },
        d,
    )
}

/// A fixed number of sweeps keeps the cost linear in the graph size; a
/// convergence test would stop at a size-dependent sweep because bulk
/// eigenvalue gaps of sparse graphs shrink as they grow.
fn subspace_top_pairs(a: &MmSpace, d: usize) -> Vec<(f64, Vec<f64>)> {
    let n = a.size();
    let b = (d + SUBSPACE_OVERSAMPLE).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ n as u64);
    let mut q = Array2::from_shape_fn((n, b), |_| StandardNormal.sample(&mut rng));
    orthonormalize(&mut q, &mut rng);
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for _ in 0..SUBSPACE_SWEEPS {
        for j in 0..b {
            col.iter_mut().zip(q.column(j)).for_each(|(c, v)| *c = *v);
            a.structure_matvec(&col, &mut out);
            q.column_mut(j).iter_mut().zip(&out).for_each(|(c, v)| *c = *v);
        }
        orthonormalize(&mut q, &mut rng);
    }
    rayleigh_ritz(a, &q, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_er, to_mm_space, Graph};

    #[test]
    fn edgeless_graph_embeds_to_zero() {
        let g = Graph::new(4, [], None, None, "e").unwrap();
        let x = spectral_embed(&to_mm_space(&g).unwrap(), 8);
        assert_eq!(x.dim(), (4, 8));
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triangle_leading_column() {
        let k3 = Graph::new(3, [(0, 1), (1, 2), (0, 2)], None, None, "k3").unwrap();
        let x = spectral_embed(&to_mm_space(&k3).unwrap(), 1);
        // eigenvector (1,1,1)/√3 of λ = 2, scaled by √2
        let expected = (2.0f64 / 3.0).sqrt();
        for i in 0..3 {
            assert!((x[[i, 0]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_follow_node_permutation() {
        let g = generate_er(12, 0.4, 5).unwrap();
        let perm = [3, 7, 0, 11, 1, 9, 2, 5, 10, 4, 8, 6];
        let h = g.permute(&perm).unwrap();
        let (mg, mh) = (to_mm_space(&g).unwrap(), to_mm_space(&h).unwrap());
        let (xg, xh) = (spectral_embed(&mg, 4), spectral_embed(&mh, 4));
        for (i, &old) in mg.support().iter().enumerate() {
            let new = mh.support().iter().position(|&s| s == perm[old]).unwrap();
            for c in 0..4 {
                assert!((xg[[i, c]] - xh[[new, c]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn subspace_iteration_agrees_with_dense() {
        let g = generate_er(300, 0.05, 2).unwrap();
        let m = to_mm_space(&g).unwrap();
        let dense = dense_top_pairs(m.structure(), 3);
        let sparse = subspace_top_pairs(&m, 3);
        for ((l1, _), (l2, _)) in dense.iter().zip(&sparse) {
            assert!((l1 - l2).abs() < 1e-6 * l1.abs(), "{l1} vs {l2}");
        }
        // leading eigenvector, after orientation
        let (mut v1, mut v2) = (dense[0].1.clone(), sparse[0].1.clone());
        orient(&mut v1);
        orient(&mut v2);
        let diff = v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6);
    }
}
