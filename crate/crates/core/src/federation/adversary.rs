use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::topology::NeighborLink;
use crate::numerics::std_dev;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    #[default]
    Honest,
    NoiseInjection,
    GradientReversal,
    IntermittentDrop,
}

/// `intensity` is the noise scale, the reversed-step multiplier, or the drop
/// probability, depending on the mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub mode: AdversaryMode,
    pub intensity: f64,
}

impl AdversarySpec {
    pub const HONEST: AdversarySpec = AdversarySpec {
        mode: AdversaryMode::Honest,
        intensity: 0.0,
    };

    pub fn is_honest(&self) -> bool {
        self.mode == AdversaryMode::Honest
    }
}

/// First-phase gossip payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub from: usize,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub fingerprint: Vec<f64>,
    pub critic_grad: Vec<f64>,
    pub recommendations: Vec<NeighborLink>,
}

/// Second-phase payload: tracking variable and robust-gradient change.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingMessage {
    pub from: usize,
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
}

fn add_noise<R: Rng + ?Sized>(v: &mut [f64], scale: f64, rng: &mut R) {
    let sigma = scale * std_dev(v);
    if sigma <= 0.0 || !sigma.is_finite() {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    for x in v.iter_mut() {
        *x += normal.sample(rng);
    }
}

fn negate(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = -*x);
}

/// Corrupts an outgoing message; `None` means it was dropped. `local_step` is
/// the sender's actor change over the round's local training.
pub fn apply_adversary<R: Rng + ?Sized>(
    spec: &AdversarySpec,
    mut msg: Message,
    local_step: &[f64],
    rng: &mut R,
) -> Option<Message> {
    match spec.mode {
        AdversaryMode::Honest => Some(msg),
        AdversaryMode::IntermittentDrop => (rng.random::<f64>() >= spec.intensity).then_some(msg),
        AdversaryMode::NoiseInjection => {
            add_noise(&mut msg.actor, spec.intensity, rng);
            add_noise(&mut msg.critic, spec.intensity, rng);
            add_noise(&mut msg.fingerprint, spec.intensity, rng);
            add_noise(&mut msg.critic_grad, spec.intensity, rng);
            Some(msg)
        }
        AdversaryMode::GradientReversal => {
            negate(&mut msg.fingerprint);
            negate(&mut msg.critic_grad);
            // Undo the local step and push the same distance the other way.
            let k = 1.0 + spec.intensity;
            for (p, s) in msg.actor.iter_mut().zip(local_step) {
                *p -= k * s;
            }
            Some(msg)
        }
    }
}

pub fn corrupt_tracking<R: Rng + ?Sized>(spec: &AdversarySpec, mut msg: TrackingMessage, rng: &mut R) -> TrackingMessage {
    match spec.mode {
        AdversaryMode::Honest | AdversaryMode::IntermittentDrop => {}
        AdversaryMode::NoiseInjection => {
            add_noise(&mut msg.y, spec.intensity, rng);
            add_noise(&mut msg.delta, spec.intensity, rng);
        }
        AdversaryMode::GradientReversal => {
            negate(&mut msg.y);
            negate(&mut msg.delta);
        }
    }
    msg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cosine_similarity;
    use crate::seeding::stream;

    fn msg() -> Message {
        Message {
            from: 0,
            actor: vec![1.0, 2.0, 3.0],
            critic: vec![0.5, -0.5],
            fingerprint: vec![0.3, -0.1, 0.7],
            critic_grad: vec![1.0, -1.0],
            recommendations: vec![],
        }
    }

    #[test]
    fn reversal_negates_fingerprint() {
        let spec = AdversarySpec {
            mode: AdversaryMode::GradientReversal,
            intensity: 1.0,
        };
        let out = apply_adversary(&spec, msg(), &[0.1, 0.0, -0.1], &mut stream(1, 0, 0)).unwrap();
        let c = cosine_similarity(&out.fingerprint, &msg().fingerprint).unwrap();
        assert!((c + 1.0).abs() < 1e-12);
        assert_eq!(out.critic_grad, vec![-1.0, 1.0]);
        assert!((out.actor[0] - 0.8).abs() < 1e-12 && (out.actor[2] - 3.2).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let spec = AdversarySpec {
            mode: AdversaryMode::NoiseInjection,
            intensity: 0.0,
        };
        assert_eq!(apply_adversary(&spec, msg(), &[0.0; 3], &mut stream(1, 0, 0)), Some(msg()));
    }

    #[test]
    fn drop_frequency() {
        let spec = AdversarySpec {
            mode: AdversaryMode::IntermittentDrop,
            intensity: 0.5,
        };
        let mut rng = stream(2, 0, 0);
        let dropped = (0..10_000)
            .filter(|_| apply_adversary(&spec, msg(), &[0.0; 3], &mut rng).is_none())
            .count();
        assert!((dropped as f64 / 10_000.0 - 0.5).abs() < 0.05);
    }
}
