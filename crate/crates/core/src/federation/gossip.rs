use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adversary::{apply_adversary, corrupt_tracking, AdversaryMode, AdversarySpec, Message, TrackingMessage};
use super::aggregate::{actor_aggregate, detect_anomalies, robust_gradient, similarity_weights, tracking_update, uniform_mean, TrackingVariable};
use super::topology::{NeighborLink, Topology};
use crate::error::{Error, Result};
use crate::infra::Fleet;
use crate::numerics::cosine_similarity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub d_max: usize,
    pub k_sample: usize,
    pub xi: f64,
    pub nu: f64,
    pub alpha_agg: f64,
    pub alpha_cag: f64,
    /// Fraction of current neighbors contacted each round.
    pub gossip_fraction: f64,
    /// A probed candidate must beat the worst neighbor's RTT by this fraction.
    pub swap_margin: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            d_max: 5,
            k_sample: 10,
            xi: 3.0,
            nu: 0.1,
            alpha_agg: 0.3,
            alpha_cag: 0.1,
            gossip_fraction: 1.0,
            swap_margin: 0.1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let checks = [
            ("federation.d_max", self.d_max >= 1),
            ("federation.k_sample", self.k_sample >= self.d_max),
            ("federation.xi", self.xi >= 0.0 && self.xi.is_finite()),
            ("federation.nu", self.nu > 0.0 && self.nu.is_finite()),
            ("federation.alpha_agg", unit(self.alpha_agg)),
            ("federation.alpha_cag", self.alpha_cag >= 0.0 && self.alpha_cag.is_finite()),
            ("federation.gossip_fraction", self.gossip_fraction > 0.0 && self.gossip_fraction <= 1.0),
            ("federation.swap_margin", unit(self.swap_margin)),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((path, _)) => Err(Error::config(*path, "value out of range")),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorMix {
    /// `(1 - alpha) own + alpha weighted neighbors`.
    Convex,
    /// Plain mean over self and neighbors.
    Replace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMix {
    Tracking,
    Average,
}

/// Which aggregation stages run in a gossip round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixingRule {
    pub filter: bool,
    pub similarity_weights: bool,
    pub actor: ActorMix,
    pub critic: CriticMix,
}

impl MixingRule {
    pub const FULL: MixingRule = MixingRule {
        filter: true,
        similarity_weights: true,
        actor: ActorMix::Convex,
        critic: CriticMix::Tracking,
    };
}

/// One silo's state as seen by the protocol, as flat vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Participant {
    pub actor: Vec<f64>,
    /// Actor parameters before this round's local training.
    pub actor_start: Vec<f64>,
    pub critic: Vec<f64>,
    pub fingerprint: Vec<f64>,
    pub critic_grad: Vec<f64>,
    pub tracker: TrackingVariable,
    pub adversary: AdversarySpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSwap {
    pub evicted: usize,
    pub evicted_rtt_ms: f64,
    pub admitted: usize,
    pub admitted_rtt_ms: f64,
}

/// Per-silo, per-round protocol record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRecord {
    pub round: usize,
    pub silo: usize,
    pub adversary: AdversaryMode,
    pub neighbors: Vec<usize>,
    pub received: Vec<usize>,
    pub similarities: Vec<f64>,
    pub threshold: Option<f64>,
    pub flagged: Vec<usize>,
    pub survivors: Vec<usize>,
    pub weights: Vec<f64>,
    pub swap: Option<NeighborSwap>,
}

impl ProtocolRecord {
    /// (true positives, false positives, false negatives) against `is_attacker`.
    pub fn detection_counts(&self, is_attacker: impl Fn(usize) -> bool) -> (usize, usize, usize) {
        let tp = self.flagged.iter().filter(|&&j| is_attacker(j)).count();
        let fp = self.flagged.len() - tp;
        let fn_ = self.survivors.iter().filter(|&&j| is_attacker(j)).count();
        (tp, fp, fn_)
    }
}

pub fn write_protocol_log<W: Write>(mut out: W, records: &[ProtocolRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Environment(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_protocol_log(path: &Path) -> Result<Vec<ProtocolRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn outgoing(p: &Participant, from: usize, topo: &Topology) -> Message {
    Message {
        from,
        actor: p.actor.clone(),
        critic: p.critic.clone(),
        fingerprint: p.fingerprint.clone(),
        critic_grad: p.critic_grad.clone(),
        recommendations: topo.recommendations(from),
    }
}

/// One bulk-synchronous exchange: gossip, filtering, actor mixing, critic
/// aggregation, and neighbor optimization. Updates `participants` and
/// `topo` in place.
pub fn gossip_round<R: Rng + ?Sized>(
    participants: &mut [Participant],
    topo: &mut Topology,
    fleet: &Fleet,
    rule: &MixingRule,
    cfg: &FederationConfig,
    round: usize,
    rng: &mut R,
) -> Result<Vec<ProtocolRecord>> {
    let m = participants.len();
    if topo.silos() != m {
        return Err(Error::ShapeMismatch(format!("{m} participants on a {}-silo overlay", topo.silos())));
    }
    let steps: Vec<Vec<f64>> = participants
        .iter()
        .map(|p| p.actor.iter().zip(&p.actor_start).map(|(a, b)| a - b).collect())
        .collect();

    // Phase one: messages, similarities, filtering, actor mixing.
    let mut records = Vec::with_capacity(m);
    let mut inboxes: Vec<Vec<Message>> = Vec::with_capacity(m);
    for i in 0..m {
        let ids = topo.ids(i);
        let contacted: Vec<usize> = if cfg.gossip_fraction < 1.0 && !ids.is_empty() {
            let k = ((cfg.gossip_fraction * ids.len() as f64).ceil() as usize).clamp(1, ids.len());
            let mut picked: Vec<usize> = sample(rng, ids.len(), k).into_iter().map(|p| ids[p]).collect();
            picked.sort_unstable();
            picked
        } else {
            ids.clone()
        };
        let received: Vec<Message> = contacted
            .iter()
            .filter_map(|&j| {
                let p = &participants[j];
                apply_adversary(&p.adversary, outgoing(p, j, topo), &steps[j], rng)
            })
            .collect();
        let own = &participants[i].fingerprint;
        let sims = received
            .iter()
            .map(|msg| cosine_similarity(own, &msg.fingerprint))
            .collect::<Result<Vec<_>>>()?;
        let (threshold, flagged_idx) = if rule.filter && !received.is_empty() {
            let (tau, f) = detect_anomalies(&sims, cfg.xi)?;
            (Some(tau), f)
        } else {
            (None, Vec::new())
        };
        let keep: Vec<usize> = (0..received.len()).filter(|k| !flagged_idx.contains(k)).collect();
        let weights = if keep.is_empty() {
            Vec::new()
        } else if rule.similarity_weights {
            similarity_weights(&keep.iter().map(|&k| sims[k]).collect::<Vec<_>>(), cfg.nu)?
        } else {
            vec![1.0 / keep.len() as f64; keep.len()]
        };
        records.push(ProtocolRecord {
            round,
            silo: i,
            adversary: participants[i].adversary.mode,
            neighbors: ids,
            received: received.iter().map(|msg| msg.from).collect(),
            similarities: sims,
            threshold,
            flagged: flagged_idx.iter().map(|&k| received[k].from).collect(),
            survivors: keep.iter().map(|&k| received[k].from).collect(),
            weights,
            swap: None,
        });
        inboxes.push(keep.into_iter().map(|k| received[k].clone()).collect());
    }

    let mut new_actor = Vec::with_capacity(m);
    let mut robust = Vec::with_capacity(m);
    for i in 0..m {
        let inbox = &inboxes[i];
        let own = &participants[i];
        let actors: Vec<&[f64]> = inbox.iter().map(|msg| msg.actor.as_slice()).collect();
        new_actor.push(match rule.actor {
            ActorMix::Convex => actor_aggregate(&own.actor, &actors, &records[i].weights, cfg.alpha_agg)?,
            ActorMix::Replace => uniform_mean(&own.actor, &actors)?,
        });
        if rule.critic == CriticMix::Tracking {
            let grads: Vec<&[f64]> = inbox.iter().map(|msg| msg.critic_grad.as_slice()).collect();
            robust.push(robust_gradient(&own.critic_grad, &grads)?);
        }
    }

    // Phase two: critic aggregation over the same survivors.
    let mut new_critic = Vec::with_capacity(m);
    match rule.critic {
        CriticMix::Average => {
            for i in 0..m {
                let critics: Vec<&[f64]> = inboxes[i].iter().map(|msg| msg.critic.as_slice()).collect();
                new_critic.push(uniform_mean(&participants[i].critic, &critics)?);
            }
        }
        CriticMix::Tracking => {
            let deltas = participants
                .iter_mut()
                .zip(&robust)
                .map(|(p, d)| p.tracker.advance(d))
                .collect::<Result<Vec<_>>>()?;
            let mut new_y = Vec::with_capacity(m);
            for i in 0..m {
                let incoming: Vec<TrackingMessage> = inboxes[i]
                    .iter()
                    .map(|msg| {
                        let j = msg.from;
                        let honest = TrackingMessage {
                            from: j,
                            y: participants[j].tracker.y.clone(),
                            delta: deltas[j].clone(),
                        };
                        corrupt_tracking(&participants[j].adversary, honest, rng)
                    })
                    .collect();
                let mut terms: Vec<(&[f64], &[f64])> = vec![(&participants[i].tracker.y, &deltas[i])];
                terms.extend(incoming.iter().map(|t| (t.y.as_slice(), t.delta.as_slice())));
                let c = vec![1.0 / terms.len() as f64; terms.len()];
                new_y.push(tracking_update(&terms, &c)?);
            }
            for (i, y) in new_y.into_iter().enumerate() {
                let critic: Vec<f64> = participants[i]
                    .critic
                    .iter()
                    .zip(&y)
                    .map(|(p, g)| p - cfg.alpha_cag * g)
                    .collect();
                new_critic.push(critic);
                participants[i].tracker.y = y;
            }
        }
    }
    for (p, (a, c)) in participants.iter_mut().zip(new_actor.into_iter().zip(new_critic)) {
        p.actor = a;
        p.critic = c;
    }

    // Neighbor optimization: probe at most one recommended candidate.
    for i in 0..m {
        let current = topo.ids(i);
        let candidate = inboxes[i]
            .iter()
            .flat_map(|msg| msg.recommendations.iter())
            .filter(|l| l.id != i && !current.contains(&l.id))
            .min_by(|a, b| a.rtt_ms.total_cmp(&b.rtt_ms).then(a.id.cmp(&b.id)))
            .copied();
        let (Some(cand), Some(worst)) = (candidate, topo.worst(i)) else {
            continue;
        };
        let rtt = fleet.measure_rtt(i, cand.id, Some(&mut *rng))?;
        if rtt <= (1.0 - cfg.swap_margin) * worst.rtt_ms {
            topo.swap_worst(i, NeighborLink { id: cand.id, rtt_ms: rtt });
            records[i].swap = Some(NeighborSwap {
                evicted: worst.id,
                evicted_rtt_ms: worst.rtt_ms,
                admitted: cand.id,
                admitted_rtt_ms: rtt,
            });
        }
    }
    Ok(records)
}
