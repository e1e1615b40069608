//! Two-layer statistics decoder `f(w) = W₂ relu(W₁ w + b₁) + b₂`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients with the same shapes as the decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl DecoderGrad {
    pub fn zeros_like(d: &Decoder) -> Self {
        DecoderGrad {
            w1: Array2::zeros(d.w1.raw_dim()),
            b1: Array1::zeros(d.b1.len()),
            w2: Array2::zeros(d.w2.raw_dim()),
            b2: Array1::zeros(d.b2.len()),
        }
    }

    pub fn add_scaled(&mut self, scale: f64, other: &DecoderGrad) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }
}

impl Decoder {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        let hidden = w1.nrows();
        if b1.len() != hidden || w2.ncols() != hidden || b2.len() != w2.nrows() {
            return Err(Error::Shape(format!(
                "decoder shapes w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                w1.dim(),
                b1.len(),
                w2.dim(),
                b2.len()
            )));
        }
        let all = w1.iter().chain(&b1).chain(&w2).chain(&b2);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("decoder has non-finite parameters".into()));
        }
        Ok(Decoder { w1, b1, w2, b2 })
    }

    /// Uniform `±1/√fan_in` initialization.
    pub fn init(k: usize, hidden: usize, r: usize, seed: u64) -> Result<Self> {
        if k == 0 || hidden == 0 || r == 0 {
            return Err(Error::InvalidParameter("decoder dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
        };
        let w1 = uniform(hidden, k, k);
        let b1 = uniform(hidden, 1, k).into_shape_with_order(hidden).expect("column");
        let w2 = uniform(r, hidden, hidden);
        let b2 = uniform(r, 1, hidden).into_shape_with_order(r).expect("column");
        Decoder::new(w1, b1, w2, b2)
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn check_input(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.input_dim() {
            return Err(Error::Shape(format!("decoder expects {} inputs, got {}", self.input_dim(), w.len())));
        }
        Ok(())
    }

    fn pre_activation(&self, w: &Array1<f64>) -> Array1<f64> {
        self.w1.dot(w) + &self.b1
    }

    pub fn decode(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(w)?;
        let h = self.pre_activation(w).mapv(|v| v.max(0.0));
        Ok(self.w2.dot(&h) + &self.b2)
    }

    /// Parameter gradients and the input gradient for an upstream gradient
    /// on the output. The rectifier has derivative 0 at 0.
    pub fn decode_backward(&self, w: &Array1<f64>, upstream: &Array1<f64>) -> Result<(DecoderGrad, Array1<f64>)> {
        self.check_input(w)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, decoder outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let z = self.pre_activation(w);
        let h = z.mapv(|v| v.max(0.0));
        let dh = self.w2.t().dot(upstream);
        let dz = &dh * &z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let outer = |a: &Array1<f64>, b: &Array1<f64>| {
            Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
        };
        let grad = DecoderGrad {
            w1: outer(&dz, w),
            b1: dz.clone(),
            w2: outer(upstream, &h),
            b2: upstream.clone(),
        };
        Ok((grad, self.w1.t().dot(&dz)))
    }

    /// `‖W₂‖₂ ‖W₁‖₂`, an upper bound on the Lipschitz constant of `decode`.
    pub fn lipschitz_bound(&self) -> f64 {
        spectral_norm(&self.w2) * spectral_norm(&self.w1)
    }

    pub(crate) fn apply_step(&mut self, step: &DecoderGrad) {
        self.w1 -= &step.w1;
        self.b1 -= &step.b1;
        self.w2 -= &step.w2;
        self.b2 -= &step.b2;
    }
}

const POWER_STEPS: usize = 100;
const POWER_TOL: f64 = 1e-8;

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // a fixed, uneven start avoids landing orthogonal to the top vector
    let mut v: Array1<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    v /= v.dot(&v).sqrt();
    let mut sigma = 0.0;
    for _ in 0..POWER_STEPS {
        let av = a.dot(&v);
        let estimate = av.dot(&av).sqrt();
        let mut next = a.t().dot(&av);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return estimate;
        }
        next /= norm;
        v = next;
        let done = (estimate - sigma).abs() <= POWER_TOL * estimate;
        sigma = estimate;
        if done {
            break;
        }
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_parameters_give_zero_output() {
        let d = Decoder::new(Array2::zeros((4, 3)), Array1::zeros(4), Array2::zeros((19, 4)), Array1::zeros(19)).unwrap();
        let out = d.decode(&Array1::from(vec![0.2, 0.3, 0.5])).unwrap();
        assert_eq!(out.len(), 19);
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(d.lipschitz_bound(), 0.0);
    }

    #[test]
    fn identity_first_layer_passes_through() {
        let w2 = Array2::from_shape_fn((2, 3), |(i, j)| (i + 2 * j) as f64);
        let d = Decoder::new(Array2::eye(3), Array1::zeros(3), w2.clone(), Array1::zeros(2)).unwrap();
        let w = Array1::from(vec![0.1, 0.6, 0.3]);
        assert_eq!(d.decode(&w).unwrap(), w2.dot(&w));
    }

    #[test]
    fn identity_blocks_have_unit_bound() {
        let d = Decoder::new(Array2::eye(4), Array1::zeros(4), Array2::eye(4), Array1::zeros(4)).unwrap();
        assert_abs_diff_eq!(d.lipschitz_bound(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = Array2::from_shape_simple_fn((7, 5), || rng.gen_range(-1.0..1.0));
            let m = nalgebra::DMatrix::from_fn(7, 5, |i, j| a[[i, j]]);
            let exact = m.singular_values().max();
            let est = spectral_norm(&a);
            assert!(est <= exact + 1e-12);
            assert!(est >= exact * (1.0 - 1e-4), "{est} vs {exact}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = Decoder::init(5, 8, 19, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Array1<f64> = (0..5).map(|_| rng.gen()).collect();
        let up: Array1<f64> = (0..19).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |d: &Decoder, w: &Array1<f64>| d.decode(w).unwrap().dot(&up);
        let (g, gin) = d.decode_backward(&w, &up).unwrap();
        let h = 1e-6;
        let check = |analytic: f64, fd: f64| {
            assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(fd.abs()).max(1e-3), "{analytic} vs {fd}");
        };
        for k in 0..5 {
            let (mut up_w, mut dn_w) = (w.clone(), w.clone());
            up_w[k] += h;
            dn_w[k] -= h;
            check(gin[k], (loss(&d, &up_w) - loss(&d, &dn_w)) / (2.0 * h));
        }
        for (i, j) in [(0, 0), (3, 2), (7, 4)] {
            let (mut a, mut b) = (d.clone(), d.clone());
            a.w1[[i, j]] += h;
            b.w1[[i, j]] -= h;
            check(g.w1[[i, j]], (loss(&a, &w) - loss(&b, &w)) / (2.0 * h));
        }
        for (i, j) in [(0, 0), (10, 5), (18, 7)] {
            let (mut a, mut b) = (d.clone(), d.clone());
            a.w2[[i, j]] += h;
            b.w2[[i, j]] -= h;
            check(g.w2[[i, j]], (loss(&a, &w) - loss(&b, &w)) / (2.0 * h));
        }
        for i in 0..8 {
            let (mut a, mut b) = (d.clone(), d.clone());
            a.b1[i] += h;
            b.b1[i] -= h;
            check(g.b1[i], (loss(&a, &w) - loss(&b, &w)) / (2.0 * h));
        }
        assert_eq!(g.b2, up);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let d = Decoder::init(3, 6, 4, 0).unwrap();
        let (g, gin) = d.decode_backward(&Array1::from(vec![0.2, 0.2, 0.6]), &Array1::zeros(4)).unwrap();
        assert_eq!(g, DecoderGrad::zeros_like(&d));
        assert!(gin.iter().all(|&v| v == 0.0));
        assert_eq!(gin.len(), 3);
    }

    #[test]
    fn bound_holds_on_random_pairs() {
        let d = Decoder::init(16, 64, 19, 7).unwrap();
        let bound = d.lipschitz_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let x: Array1<f64> = (0..16).map(|_| rng.gen()).collect();
            let y: Array1<f64> = (0..16).map(|_| rng.gen()).collect();
            let lhs = (d.decode(&x).unwrap() - d.decode(&y).unwrap()).mapv(|v| v * v).sum().sqrt();
            let dist = (&x - &y).mapv(|v| v * v).sum().sqrt();
            assert!(lhs <= bound * dist + 1e-9);
        }
    }
}
