//! Per-silo on-policy training: trajectory collection, GAE, the clipped
//! actor update, the TD critic update, and the gradient-fingerprint window.

mod optim;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use optim::{clip_grad_norm, Optimizer, OptimizerKind};

use crate::error::{Error, Result};
use crate::numerics::{masked_softmax, mean, std_dev};
use crate::policy::{
    act, extract_features, ActMode, ActorForward, ActorModel, CriticParams, FeatureScales, FeatureVectors, RESOURCE_DIM, STATE_DIM,
};
use crate::seeding::SimRng;
use crate::simenv::{check_episode, CostBreakdown, InvariantViolation, SiloEnv};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub feats: FeatureVectors,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob_old: f64,
    pub reward: f64,
    pub done: bool,
    pub fingerprint: Vec<f64>,
    /// State features of the following decision; zeros after the terminal one.
    pub next_state: Vec<f64>,
    /// Forward pass recorded at collection time.
    pub forward: Option<ActorForward>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub transitions: Vec<Transition>,
    pub cost: Option<CostBreakdown>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// The K most recent fingerprint contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintBuffer {
    capacity: usize,
    items: VecDeque<Vec<f64>>,
}

impl FingerprintBuffer {
    pub fn new(capacity: usize) -> Self {
        FingerprintBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, g: Vec<f64>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(g);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Mean of the stored contributions; zeros when empty.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; RESOURCE_DIM];
        if self.items.is_empty() {
            return out;
        }
        for g in &self.items {
            for (o, v) in out.iter_mut().zip(g) {
                *o += v;
            }
        }
        let n = self.items.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Plays the current episode of `env` to completion. Terminal credits are
/// folded back into the rewards of the decisions they belong to.
pub fn collect(
    env: &mut SiloEnv,
    actor: &ActorModel,
    scales: &FeatureScales,
    mode: ActMode,
    rng: &mut SimRng,
) -> Result<TrajectoryBatch> {
    let mut transitions: Vec<Transition> = Vec::with_capacity(env.total_tasks());
    while let Some(pd) = env.pending() {
        let feats = extract_features(&env.observe(), pd, env.silo(), scales);
        let mask = pd.feasible.clone();
        let (decision, fwd) = act(actor, &feats, &mask, mode, rng)?;
        let fingerprint = actor.fingerprint_contribution(&fwd, decision.action)?;
        if let Some(prev) = transitions.last_mut() {
            prev.next_state = feats.state.clone();
        }
        let out = env.step(decision.action)?;
        transitions.push(Transition {
            feats,
            mask,
            action: decision.action,
            log_prob_old: decision.log_prob,
            reward: out.dense_reward,
            done: out.done,
            fingerprint,
            next_state: vec![0.0; STATE_DIM],
            forward: Some(fwd),
        });
        for c in out.credits {
            transitions[c.decision].reward += c.reward;
        }
    }
    Ok(TrajectoryBatch {
        transitions,
        cost: env.cost().cloned(),
    })
}

/// Generalized advantage estimates and one-step value targets.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::EmptyInput("advantage batch"));
    }
    if values.len() != n || next_values.len() != n || dones.len() != n {
        return Err(Error::ShapeMismatch("advantage inputs differ in length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut targets = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        targets[t] = rewards[t] + gamma * next_values[t] * live;
        let delta = targets[t] - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    Ok((adv, targets))
}

/// Per-sample clipped surrogate `min(k A, clip(k, 1-eps, 1+eps) A)` and its
/// derivative with respect to `k`.
pub fn clipped_objective(kappa: f64, advantage: f64, epsilon: f64) -> (f64, f64) {
    let unclipped = kappa * advantage;
    let clipped = kappa.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// Exponentially weighted multi-step TD errors.
    Gae,
    /// One-step TD error.
    TdOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// `None` disables clipping.
    pub clip_epsilon: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
    pub advantage_mode: AdvantageMode,
    pub grad_clip_norm: f64,
    pub optimizer: OptimizerKind,
    pub fingerprint_window: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: Some(0.2),
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            normalize_advantages: true,
            advantage_mode: AdvantageMode::Gae,
            grad_clip_norm: 10.0,
            optimizer: OptimizerKind::Adam,
            fingerprint_window: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActorUpdateStats {
    pub objective: f64,
    pub clip_fraction: f64,
    pub grad_clipped: bool,
    pub applied: bool,
}

/// One full-batch ascent step on the clipped surrogate.
pub fn actor_update(
    batch: &TrajectoryBatch,
    advantages: &[f64],
    actor: &mut ActorModel,
    optimizer: &mut Optimizer,
    epsilon: Option<f64>,
    grad_clip: f64,
) -> Result<ActorUpdateStats> {
    let n = batch.len();
    if n == 0 || advantages.len() != n {
        return Err(Error::ShapeMismatch("advantages must align with a non-empty batch".into()));
    }
    let mut grad = vec![0.0; actor.param_count()];
    let mut objective = 0.0;
    let mut clipped = 0usize;
    for (tr, &a) in batch.transitions.iter().zip(advantages) {
        let fresh;
        let fwd = match &tr.forward {
            Some(f) if actor.is_current(f) => f,
            _ => {
                fresh = actor.forward(&tr.feats)?;
                &fresh
            }
        };
        let probs = masked_softmax(&fwd.scores, &tr.mask)?;
        let kappa = (probs[tr.action].ln() - tr.log_prob_old).exp();
        let (obj, d_kappa) = match epsilon {
            Some(eps) => {
                let (o, d) = clipped_objective(kappa, a, eps);
                if (kappa - 1.0).abs() > eps && d == 0.0 {
                    clipped += 1;
                }
                (o, d)
            }
            None => (kappa * a, a),
        };
        objective += obj;
        if d_kappa == 0.0 {
            continue;
        }
        let coef = d_kappa * kappa;
        let dscores: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(c, p)| coef * (if c == tr.action { 1.0 } else { 0.0 } - p))
            .collect();
        actor.accumulate_backward(fwd, &dscores, &mut grad)?;
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    let mut stats = ActorUpdateStats {
        objective: objective * inv,
        clip_fraction: clipped as f64 * inv,
        ..ActorUpdateStats::default()
    };
    if grad.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite actor gradient; update skipped");
        return Ok(stats);
    }
    stats.grad_clipped = clip_grad_norm(&mut grad, grad_clip);
    if stats.grad_clipped {
        log::debug!("actor gradient norm clipped to {grad_clip}");
    }
    let mut flat = actor.flat();
    optimizer.step(&mut flat, &grad, true);
    actor.set_flat(&flat)?;
    stats.applied = true;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticUpdate {
    pub loss: f64,
    /// Mean-loss gradient before the step.
    pub gradient: Vec<f64>,
    pub applied: bool,
}

/// Half mean squared TD error and its gradient.
pub fn critic_loss_and_grad(states: &[Vec<f64>], targets: &[f64], critic: &CriticParams) -> Result<(f64, Vec<f64>)> {
    if states.len() != targets.len() || states.is_empty() {
        return Err(Error::ShapeMismatch("critic targets must align with a non-empty batch".into()));
    }
    let mut grad = vec![0.0; critic.param_count()];
    let mut loss = 0.0;
    for (s, &y) in states.iter().zip(targets) {
        let (v, tape) = critic.forward(s)?;
        let err = v - y;
        loss += 0.5 * err * err;
        if err != 0.0 {
            critic.accumulate_backward(&tape, err, &mut grad)?;
        }
    }
    let inv = 1.0 / states.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

/// One descent step on the TD loss; returns the pre-step gradient.
pub fn critic_update(
    states: &[Vec<f64>],
    targets: &[f64],
    critic: &mut CriticParams,
    optimizer: &mut Optimizer,
    grad_clip: f64,
) -> Result<CriticUpdate> {
    let (loss, gradient) = critic_loss_and_grad(states, targets, critic)?;
    if gradient.iter().any(|g| !g.is_finite()) || !loss.is_finite() {
        log::warn!("non-finite critic gradient; update skipped");
        return Ok(CriticUpdate {
            loss,
            gradient: vec![0.0; critic.param_count()],
            applied: false,
        });
    }
    let mut step = gradient.clone();
    clip_grad_norm(&mut step, grad_clip);
    let mut flat = critic.flat();
    optimizer.step(&mut flat, &step, false);
    critic.set_flat(&flat)?;
    Ok(CriticUpdate {
        loss,
        gradient,
        applied: true,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub episodes: usize,
    pub decisions: usize,
    pub episode_return: f64,
    pub mean_advantage: f64,
    pub clip_fraction: f64,
    pub critic_loss: f64,
    pub train_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalRoundOutput {
    pub fingerprint: Vec<f64>,
    /// Mean of the pre-step critic gradients of the round.
    pub critic_grad: Vec<f64>,
    pub stats: RoundStats,
}

/// A silo's learner state.
#[derive(Clone, Debug)]
pub struct SiloLearner {
    pub actor: ActorModel,
    pub critic: CriticParams,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    pub fingerprints: FingerprintBuffer,
    pub config: LearnerConfig,
    pub scales: FeatureScales,
    /// When set, every finished episode's event log is audited.
    pub audit: bool,
    pub violations: Vec<InvariantViolation>,
    pub audited_episodes: usize,
    rng: SimRng,
}

impl SiloLearner {
    pub fn new(actor: ActorModel, critic: CriticParams, config: LearnerConfig, scales: FeatureScales, rng: SimRng) -> Self {
        SiloLearner {
            actor_opt: Optimizer::new(config.optimizer, config.actor_lr, actor.param_count()),
            critic_opt: Optimizer::new(config.optimizer, config.critic_lr, critic.param_count()),
            fingerprints: FingerprintBuffer::new(config.fingerprint_window),
            actor,
            critic,
            config,
            scales,
            audit: false,
            violations: Vec::new(),
            audited_episodes: 0,
            rng,
        }
    }

    fn audit_episode(&mut self, env: &SiloEnv) {
        if self.audit {
            self.violations.extend(check_episode(env.event_log(), env.apps(), env.silo()));
            self.audited_episodes += 1;
        }
    }

    /// Collects one episode and applies one actor and one critic update.
    pub fn train_episode(&mut self, env: &mut SiloEnv) -> Result<(RoundStats, Vec<f64>)> {
        env.reset()?;
        let batch = collect(env, &self.actor, &self.scales, ActMode::Sample, &mut self.rng)?;
        self.audit_episode(env);
        for t in &batch.transitions {
            self.fingerprints.push(t.fingerprint.clone());
        }
        let states: Vec<Vec<f64>> = batch.transitions.iter().map(|t| t.feats.state.clone()).collect();
        let values = states.iter().map(|s| self.critic.value(s)).collect::<Result<Vec<_>>>()?;
        let next_values = batch
            .transitions
            .iter()
            .map(|t| if t.done { Ok(0.0) } else { self.critic.value(&t.next_state) })
            .collect::<Result<Vec<_>>>()?;
        let rewards: Vec<f64> = batch.transitions.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.transitions.iter().map(|t| t.done).collect();
        let lambda = match self.config.advantage_mode {
            AdvantageMode::Gae => self.config.gae_lambda,
            AdvantageMode::TdOne => 0.0,
        };
        let (mut adv, targets) = gae(&rewards, &values, &next_values, &dones, self.config.gamma, lambda)?;
        let mean_adv = mean(&adv);
        if self.config.normalize_advantages && adv.len() > 1 {
            let sd = std_dev(&adv).max(1e-8);
            adv.iter_mut().for_each(|a| *a = (*a - mean_adv) / sd);
        }
        let a_stats = actor_update(
            &batch,
            &adv,
            &mut self.actor,
            &mut self.actor_opt,
            self.config.clip_epsilon,
            self.config.grad_clip_norm,
        )?;
        let c = critic_update(&states, &targets, &mut self.critic, &mut self.critic_opt, self.config.grad_clip_norm)?;
        let stats = RoundStats {
            episodes: 1,
            decisions: batch.len(),
            episode_return: batch.total_reward(),
            mean_advantage: mean_adv,
            clip_fraction: a_stats.clip_fraction,
            critic_loss: c.loss,
            train_cost: batch.cost.as_ref().map_or(0.0, |c| c.total),
        };
        Ok((stats, c.gradient))
    }

    /// Omega training episodes, then the fingerprint and the round's critic
    /// gradient for exchange.
    pub fn local_round(&mut self, env: &mut SiloEnv, episodes: usize) -> Result<LocalRoundOutput> {
        let mut grad_sum = vec![0.0; self.critic.param_count()];
        let mut acc = RoundStats::default();
        for _ in 0..episodes {
            let (s, g) = self.train_episode(env)?;
            for (a, b) in grad_sum.iter_mut().zip(&g) {
                *a += b;
            }
            acc.episodes += 1;
            acc.decisions += s.decisions;
            acc.episode_return += s.episode_return;
            acc.mean_advantage += s.mean_advantage;
            acc.clip_fraction += s.clip_fraction;
            acc.critic_loss += s.critic_loss;
            acc.train_cost += s.train_cost;
        }
        if episodes > 0 {
            let k = episodes as f64;
            grad_sum.iter_mut().for_each(|g| *g /= k);
            acc.episode_return /= k;
            acc.mean_advantage /= k;
            acc.clip_fraction /= k;
            acc.critic_loss /= k;
            acc.train_cost /= k;
        }
        Ok(LocalRoundOutput {
            fingerprint: self.fingerprints.mean(),
            critic_grad: grad_sum,
            stats: acc,
        })
    }

    /// Greedy evaluation over a fixed application list.
    pub fn evaluate(&mut self, env: &mut SiloEnv, apps: Vec<crate::workload::DagApp>) -> Result<CostBreakdown> {
        env.reset_with_apps(apps)?;
        let batch = collect(env, &self.actor, &self.scales, ActMode::Greedy, &mut self.rng)?;
        self.audit_episode(env);
        batch.cost.ok_or_else(|| Error::Environment("evaluation episode did not finish".into()))
    }

}
