//! First-order optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(crate::Error::InvalidParameter(format!(
                "unknown optimizer {other:?} (expected adam or sgd)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, size: usize) -> Self {
        Optimizer {
            kind,
            lr,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    /// The update to subtract from the parameters.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        match self.kind {
            OptimizerKind::Sgd => grad.iter().map(|g| self.lr * g).collect(),
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                grad.iter()
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS)
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_is_signed_learning_rate() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 3);
        let step = opt.step(&[2.0, -0.5, 0.0]);
        assert!((step[0] - 0.01).abs() < 1e-9);
        assert!((step[1] + 0.01).abs() < 1e-9);
        assert_eq!(step[2], 0.0);
    }

    #[test]
    fn sgd_scales_gradient() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        assert_eq!(opt.step(&[1.0, -2.0]), vec![0.1, -0.2]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05, 1);
        let mut x = 3.0;
        for _ in 0..2000 {
            x -= opt.step(&[2.0 * (x - 1.0)])[0];
        }
        assert!((x - 1.0).abs() < 1e-3);
    }
}
