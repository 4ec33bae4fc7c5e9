use serde::{Deserialize, Serialize};

use crate::numerics::l2_norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        Optimizer {
            kind,
            lr,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Moves `params` against `grad` (descent) or along it (ascent).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], ascend: bool) {
        let sign = if ascend { 1.0 } else { -1.0 };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += sign * self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powf(self.t as f64);
                let c2 = 1.0 - BETA2.powf(self.t as f64);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    let step = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
                    params[i] += sign * self.lr * step;
                }
            }
        }
    }
}

/// Rescales `grad` in place to at most `max_norm`; returns whether it did.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> bool {
    let norm = l2_norm(grad);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_direction() {
        let mut p = vec![1.0, 1.0];
        Optimizer::new(OptimizerKind::Sgd, 0.5, 2).step(&mut p, &[2.0, -2.0], false);
        assert_eq!(p, vec![0.0, 2.0]);
        Optimizer::new(OptimizerKind::Sgd, 0.5, 2).step(&mut p, &[2.0, -2.0], true);
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = vec![0.0, 0.0];
        Optimizer::new(OptimizerKind::Adam, 0.01, 2).step(&mut p, &[5.0, -0.1], false);
        assert!((p[0] + 0.01).abs() < 1e-6 && (p[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![30.0, 40.0];
        assert!(clip_grad_norm(&mut g, 10.0));
        assert!((l2_norm(&g) - 10.0).abs() < 1e-12);
        let mut small = vec![1.0, 1.0];
        assert!(!clip_grad_norm(&mut small, 10.0));
    }
}
