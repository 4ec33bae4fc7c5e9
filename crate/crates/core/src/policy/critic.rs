use rand::Rng;

use super::features::STATE_DIM;
use crate::error::{Error, Result};
use crate::numerics::{Mlp, MlpTape};

/// State-value network: one ReLU hidden layer and a scalar head.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticParams {
    net: Mlp,
}

impl CriticParams {
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        CriticParams {
            net: Mlp::init_uniform(&[STATE_DIM, hidden, 1], rng).expect("valid dims"),
        }
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if net.layers().len() != 2 || net.in_dim() != STATE_DIM || net.out_dim() != 1 {
            return Err(Error::ShapeMismatch("critic must map 16 features through one hidden layer to 1".into()));
        }
        Ok(CriticParams { net })
    }

    pub fn hidden(&self) -> usize {
        self.net.layers()[0].out_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn value(&self, psi_state: &[f64]) -> Result<f64> {
        Ok(self.net.apply(psi_state)?[0])
    }

    pub fn forward(&self, psi_state: &[f64]) -> Result<(f64, MlpTape)> {
        let (v, tape) = self.net.forward(psi_state)?;
        Ok((v[0], tape))
    }

    /// Flat parameter gradient scaled by `dv`.
    pub fn backward(&self, tape: &MlpTape, dv: f64) -> Result<Vec<f64>> {
        Ok(self.net.backward(tape, &[dv])?.flat())
    }

    /// Adds `dv * dV/dparams` into `grad`.
    pub fn accumulate_backward(&self, tape: &MlpTape, dv: f64, grad: &mut [f64]) -> Result<()> {
        self.net.accumulate_backward(tape, &[dv], grad).map(|_| ())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.net.flat()
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        self.net.set_flat(src)
    }
}
