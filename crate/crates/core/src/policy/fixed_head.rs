use rand::Rng;

use super::features::{FeatureVectors, RESOURCE_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::numerics::{Mlp, MlpTape};

/// Actor with one output per resource slot, sized for the largest silo.
/// Input is the state features followed by every slot's resource features,
/// zero-padded past the silo's resource count.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedHeadParams {
    net: Mlp,
    slots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedHeadTape {
    tape: MlpTape,
    candidates: usize,
}

impl FixedHeadParams {
    pub fn init<R: Rng + ?Sized>(hidden: usize, slots: usize, rng: &mut R) -> Self {
        FixedHeadParams {
            net: Mlp::init_uniform(&[STATE_DIM + RESOURCE_DIM * slots, hidden, slots], rng).expect("valid dims"),
            slots,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.net.flat()
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        self.net.set_flat(src)
    }

    fn input(&self, feats: &FeatureVectors) -> Result<Vec<f64>> {
        if feats.resources.len() > self.slots {
            return Err(Error::ShapeMismatch(format!(
                "{} candidates exceed {} output slots",
                feats.resources.len(),
                self.slots
            )));
        }
        let mut x = Vec::with_capacity(STATE_DIM + RESOURCE_DIM * self.slots);
        x.extend_from_slice(&feats.state);
        for r in &feats.resources {
            x.extend_from_slice(r);
        }
        x.resize(STATE_DIM + RESOURCE_DIM * self.slots, 0.0);
        Ok(x)
    }

    pub fn forward(&self, feats: &FeatureVectors) -> Result<(Vec<f64>, FixedHeadTape)> {
        let (mut out, tape) = self.net.forward(&self.input(feats)?)?;
        out.truncate(feats.resources.len());
        Ok((
            out,
            FixedHeadTape {
                tape,
                candidates: feats.resources.len(),
            },
        ))
    }

    pub fn backward(&self, tape: &FixedHeadTape, dscores: &[f64]) -> Result<Vec<f64>> {
        if dscores.len() != tape.candidates {
            return Err(Error::ShapeMismatch("score gradient length".into()));
        }
        let mut up = dscores.to_vec();
        up.resize(self.slots, 0.0);
        Ok(self.net.backward(&tape.tape, &up)?.flat())
    }

    pub fn fingerprint_contribution(&self, tape: &FixedHeadTape, chosen: usize) -> Result<Vec<f64>> {
        if chosen >= tape.candidates {
            return Err(Error::InvalidParameter(format!("no candidate {chosen}")));
        }
        let mut up = vec![0.0; self.slots];
        up[chosen] = 1.0;
        let g = self.net.backward(&tape.tape, &up)?;
        let off = STATE_DIM + RESOURCE_DIM * chosen;
        Ok(g.input[off..off + RESOURCE_DIM].to_vec())
    }
}
