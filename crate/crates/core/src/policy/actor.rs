use rand::Rng;

use super::features::{FeatureVectors, GLOBAL_DIM, RESOURCE_DIM, TASK_DIM};
use super::fixed_head::{FixedHeadParams, FixedHeadTape};
use crate::error::{Error, Result};
use crate::numerics::{argmax_masked, masked_softmax, next_stamp, LinearLayer};

/// Scoring actor: three encoders and a fusion vector. Its parameter count
/// does not depend on how many candidates a silo offers.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorParams {
    task_enc: LinearLayer,
    resource_enc: LinearLayer,
    global_enc: LinearLayer,
    fusion_w: Vec<f64>,
    stamp: u64,
}

/// Cached activations of one scoring pass over all candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTape {
    stamp: u64,
    task_in: Vec<f64>,
    task_h: Vec<f64>,
    global_in: Vec<f64>,
    global_h: Vec<f64>,
    resource_in: Vec<Vec<f64>>,
    resource_h: Vec<Vec<f64>>,
}

impl ActorParams {
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let task_enc = LinearLayer::init_uniform(hidden, TASK_DIM, rng);
        let resource_enc = LinearLayer::init_uniform(hidden, RESOURCE_DIM, rng);
        let global_enc = LinearLayer::init_uniform(hidden, GLOBAL_DIM, rng);
        let bound = 1.0 / ((4 * hidden) as f64).sqrt();
        let fusion_w = (0..4 * hidden).map(|_| rng.random_range(-bound..=bound)).collect();
        ActorParams {
            task_enc,
            resource_enc,
            global_enc,
            fusion_w,
            stamp: next_stamp(),
        }
    }

    pub fn from_parts(
        task_enc: LinearLayer,
        resource_enc: LinearLayer,
        global_enc: LinearLayer,
        fusion_w: Vec<f64>,
    ) -> Result<Self> {
        let h = task_enc.out_dim();
        if task_enc.in_dim() != TASK_DIM
            || resource_enc.in_dim() != RESOURCE_DIM
            || global_enc.in_dim() != GLOBAL_DIM
            || resource_enc.out_dim() != h
            || global_enc.out_dim() != h
            || fusion_w.len() != 4 * h
        {
            return Err(Error::ShapeMismatch("actor encoder shapes disagree".into()));
        }
        Ok(ActorParams {
            task_enc,
            resource_enc,
            global_enc,
            fusion_w,
            stamp: next_stamp(),
        })
    }

    pub fn hidden(&self) -> usize {
        self.task_enc.out_dim()
    }

    pub fn task_enc(&self) -> &LinearLayer {
        &self.task_enc
    }

    pub fn resource_enc(&self) -> &LinearLayer {
        &self.resource_enc
    }

    pub fn global_enc(&self) -> &LinearLayer {
        &self.global_enc
    }

    pub fn fusion_w(&self) -> &[f64] {
        &self.fusion_w
    }

    pub fn param_count(&self) -> usize {
        35 * self.hidden()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.task_enc.write_flat(&mut out);
        self.resource_enc.write_flat(&mut out);
        self.global_enc.write_flat(&mut out);
        out.extend_from_slice(&self.fusion_w);
        out
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "actor flat vector of {} for {} parameters",
                src.len(),
                self.param_count()
            )));
        }
        let mut off = self.task_enc.read_flat(src)?;
        off += self.resource_enc.read_flat(&src[off..])?;
        off += self.global_enc.read_flat(&src[off..])?;
        self.fusion_w.copy_from_slice(&src[off..]);
        self.stamp = next_stamp();
        Ok(())
    }

    fn fuse(&self, h_t: &[f64], h_r: &[f64], h_g: &[f64]) -> f64 {
        let h = self.hidden();
        let w = &self.fusion_w;
        let mut u = 0.0;
        for k in 0..h {
            u += w[k] * h_t[k].max(0.0);
            u += w[h + k] * h_r[k].max(0.0);
            u += w[2 * h + k] * h_g[k].max(0.0);
            u += w[3 * h + k] * (h_t[k] * h_r[k]).max(0.0);
        }
        u
    }

    fn encode(layer: &LinearLayer, x: &[f64], expected: usize) -> Result<Vec<f64>> {
        if x.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "feature of length {} where {expected} expected",
                x.len()
            )));
        }
        Ok(crate::numerics::relu(&layer.apply(x)?))
    }

    /// Scores every candidate and records a tape for the backward pass.
    pub fn forward(&self, feats: &FeatureVectors) -> Result<(Vec<f64>, ScoreTape)> {
        let task_h = Self::encode(&self.task_enc, &feats.task, TASK_DIM)?;
        let global_h = Self::encode(&self.global_enc, &feats.global, GLOBAL_DIM)?;
        let resource_h = feats
            .resources
            .iter()
            .map(|r| Self::encode(&self.resource_enc, r, RESOURCE_DIM))
            .collect::<Result<Vec<_>>>()?;
        let scores = resource_h
            .iter()
            .map(|h_r| self.fuse(&task_h, h_r, &global_h))
            .collect();
        Ok((
            scores,
            ScoreTape {
                stamp: self.stamp,
                task_in: feats.task.clone(),
                task_h,
                global_in: feats.global.clone(),
                global_h,
                resource_in: feats.resources.clone(),
                resource_h,
            },
        ))
    }

    /// Score of a single candidate.
    pub fn score(&self, feats: &FeatureVectors, candidate: usize) -> Result<f64> {
        let r = feats
            .resources
            .get(candidate)
            .ok_or_else(|| Error::InvalidParameter(format!("no candidate {candidate}")))?;
        let h_t = Self::encode(&self.task_enc, &feats.task, TASK_DIM)?;
        let h_g = Self::encode(&self.global_enc, &feats.global, GLOBAL_DIM)?;
        let h_r = Self::encode(&self.resource_enc, r, RESOURCE_DIM)?;
        Ok(self.fuse(&h_t, &h_r, &h_g))
    }

    fn check(&self, tape: &ScoreTape) -> Result<()> {
        if tape.stamp != self.stamp {
            return Err(Error::StaleTape);
        }
        Ok(())
    }

    /// Adds the gradients of `g * u_c` with respect to the task, resource and
    /// global hidden units and the fusion weights. The resource part is
    /// overwritten and already masked by its ReLU.
    fn hidden_grads(
        &self,
        tape: &ScoreTape,
        c: usize,
        g: f64,
        d_t: &mut [f64],
        d_r: &mut [f64],
        d_g: &mut [f64],
        d_w: Option<&mut [f64]>,
    ) {
        let h = self.hidden();
        let w = &self.fusion_w;
        let (h_t, h_r, h_g) = (&tape.task_h, &tape.resource_h[c], &tape.global_h);
        for k in 0..h {
            let prod = h_t[k] * h_r[k];
            let z = [h_t[k], h_r[k], h_g[k], prod];
            let mut dz = [0.0; 4];
            for s in 0..4 {
                if z[s] > 0.0 {
                    dz[s] = g * w[s * h + k];
                }
            }
            d_t[k] += dz[0] + dz[3] * h_r[k];
            d_r[k] = if h_r[k] > 0.0 { dz[1] + dz[3] * h_t[k] } else { 0.0 };
            d_g[k] += dz[2];
        }
        if let Some(d_w) = d_w {
            for s in 0..4 {
                for k in 0..h {
                    let z = match s {
                        0 => h_t[k],
                        1 => h_r[k],
                        2 => h_g[k],
                        _ => h_t[k] * h_r[k],
                    };
                    d_w[s * h + k] += g * z.max(0.0);
                }
            }
        }
    }

    /// Flat parameter gradient of `sum_c dscores[c] * u_c`.
    pub fn backward(&self, tape: &ScoreTape, dscores: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_count()];
        self.accumulate_backward(tape, dscores, &mut grad)?;
        Ok(grad)
    }

    /// Like `backward`, adding into `grad` instead of allocating.
    pub fn accumulate_backward(&self, tape: &ScoreTape, dscores: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check(tape)?;
        if dscores.len() != tape.resource_h.len() {
            return Err(Error::ShapeMismatch("score gradient length".into()));
        }
        if grad.len() != self.param_count() {
            return Err(Error::ShapeMismatch("actor gradient buffer length".into()));
        }
        let h = self.hidden();
        let (t_w, rest) = grad.split_at_mut(TASK_DIM * h);
        let (t_b, rest) = rest.split_at_mut(h);
        let (r_w, rest) = rest.split_at_mut(RESOURCE_DIM * h);
        let (r_b, rest) = rest.split_at_mut(h);
        let (g_w, rest) = rest.split_at_mut(GLOBAL_DIM * h);
        let (g_b, f_w) = rest.split_at_mut(h);
        let mut d_task = vec![0.0; h];
        let mut d_glob = vec![0.0; h];
        let mut d_r = vec![0.0; h];
        for (c, &g) in dscores.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.hidden_grads(tape, c, g, &mut d_task, &mut d_r, &mut d_glob, Some(&mut *f_w));
            self.resource_enc
                .accumulate_backward(&tape.resource_in[c], &d_r, r_w, r_b, None)?;
        }
        for k in 0..h {
            if tape.task_h[k] <= 0.0 {
                d_task[k] = 0.0;
            }
            if tape.global_h[k] <= 0.0 {
                d_glob[k] = 0.0;
            }
        }
        self.task_enc.accumulate_backward(&tape.task_in, &d_task, t_w, t_b, None)?;
        self.global_enc.accumulate_backward(&tape.global_in, &d_glob, g_w, g_b, None)?;
        Ok(())
    }

    /// Gradient of the chosen candidate's score with respect to its own
    /// resource features.
    pub fn fingerprint_contribution(&self, tape: &ScoreTape, chosen: usize) -> Result<Vec<f64>> {
        self.check(tape)?;
        if chosen >= tape.resource_h.len() {
            return Err(Error::InvalidParameter(format!("no candidate {chosen}")));
        }
        let h = self.hidden();
        let (mut d_t, mut d_r, mut d_g) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        self.hidden_grads(tape, chosen, 1.0, &mut d_t, &mut d_r, &mut d_g, None);
        let mut dx = vec![0.0; RESOURCE_DIM];
        let mut scratch_w = vec![0.0; RESOURCE_DIM * h];
        let mut scratch_b = vec![0.0; h];
        self.resource_enc.accumulate_backward(
            &tape.resource_in[chosen],
            &d_r,
            &mut scratch_w,
            &mut scratch_b,
            Some(&mut dx),
        )?;
        Ok(dx)
    }
}

/// Either actor architecture behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum ActorModel {
    Scoring(ActorParams),
    FixedHead(FixedHeadParams),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActorTape {
    Scoring(ScoreTape),
    FixedHead(FixedHeadTape),
}

/// Scores plus the tape needed to differentiate them.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorForward {
    pub scores: Vec<f64>,
    pub tape: ActorTape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_prob: f64,
    pub probs: Vec<f64>,
}

impl ActorModel {
    pub fn param_count(&self) -> usize {
        match self {
            ActorModel::Scoring(p) => p.param_count(),
            ActorModel::FixedHead(p) => p.param_count(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        match self {
            ActorModel::Scoring(p) => p.flat(),
            ActorModel::FixedHead(p) => p.flat(),
        }
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        match self {
            ActorModel::Scoring(p) => p.set_flat(src),
            ActorModel::FixedHead(p) => p.set_flat(src),
        }
    }

    pub fn forward(&self, feats: &FeatureVectors) -> Result<ActorForward> {
        Ok(match self {
            ActorModel::Scoring(p) => {
                let (scores, tape) = p.forward(feats)?;
                ActorForward {
                    scores,
                    tape: ActorTape::Scoring(tape),
                }
            }
            ActorModel::FixedHead(p) => {
                let (scores, tape) = p.forward(feats)?;
                ActorForward {
                    scores,
                    tape: ActorTape::FixedHead(tape),
                }
            }
        })
    }

    pub fn backward(&self, fwd: &ActorForward, dscores: &[f64]) -> Result<Vec<f64>> {
        match (self, &fwd.tape) {
            (ActorModel::Scoring(p), ActorTape::Scoring(t)) => p.backward(t, dscores),
            (ActorModel::FixedHead(p), ActorTape::FixedHead(t)) => p.backward(t, dscores),
            _ => Err(Error::StaleTape),
        }
    }

    /// Whether `fwd` was recorded with the current parameters.
    pub fn is_current(&self, fwd: &ActorForward) -> bool {
        match (self, &fwd.tape) {
            (ActorModel::Scoring(p), ActorTape::Scoring(t)) => p.check(t).is_ok(),
            _ => false,
        }
    }

    /// Adds the parameter gradient of `sum_c dscores[c] * u_c` into `grad`.
    pub fn accumulate_backward(&self, fwd: &ActorForward, dscores: &[f64], grad: &mut [f64]) -> Result<()> {
        match (self, &fwd.tape) {
            (ActorModel::Scoring(p), ActorTape::Scoring(t)) => p.accumulate_backward(t, dscores, grad),
            (ActorModel::FixedHead(p), ActorTape::FixedHead(t)) => {
                for (g, d) in grad.iter_mut().zip(p.backward(t, dscores)?) {
                    *g += d;
                }
                Ok(())
            }
            _ => Err(Error::StaleTape),
        }
    }

    pub fn fingerprint_contribution(&self, fwd: &ActorForward, chosen: usize) -> Result<Vec<f64>> {
        match (self, &fwd.tape) {
            (ActorModel::Scoring(p), ActorTape::Scoring(t)) => p.fingerprint_contribution(t, chosen),
            (ActorModel::FixedHead(p), ActorTape::FixedHead(t)) => p.fingerprint_contribution(t, chosen),
            _ => Err(Error::StaleTape),
        }
    }
}

/// Masked-softmax action selection over the candidate scores.
pub fn act<R: Rng + ?Sized>(
    model: &ActorModel,
    feats: &FeatureVectors,
    mask: &[bool],
    mode: ActMode,
    rng: &mut R,
) -> Result<(Decision, ActorForward)> {
    let fwd = model.forward(feats)?;
    let probs = masked_softmax(&fwd.scores, mask)?;
    let action = match mode {
        ActMode::Greedy => argmax_masked(&fwd.scores, mask)?,
        ActMode::Sample => sample_index(&probs, rng),
    };
    let log_prob = probs[action].ln();
    Ok((
        Decision {
            action,
            log_prob,
            probs,
        },
        fwd,
    ))
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
