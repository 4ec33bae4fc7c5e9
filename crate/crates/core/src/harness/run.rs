use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Variant};
use super::metrics::{rate_or_one, write_metrics, MetricsRecord, FLEET};
use crate::error::{Error, Result};
use crate::federation::{
    build_topology, effective_degree, gossip_round, write_protocol_log, AdversarySpec, Participant, ProtocolRecord,
    TrackingVariable,
};
use crate::infra::{Fleet, Silo};
use crate::learner::{LocalRoundOutput, SiloLearner};
use crate::numerics::mean;
use crate::policy::{ActorModel, ActorParams, CriticParams, FixedHeadParams};
use crate::seeding::{stream, tag};
use crate::simenv::{calibrate_normalizer, episode_apps, CostBreakdown, SiloEnv};
use crate::workload::DagApp;

/// Rounds averaged for the reported final values.
pub const FINAL_WINDOW: usize = 5;
/// Detection statistics are reported from this round on.
pub const DETECTION_WARMUP_ROUNDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub variant: Variant,
    pub seed: u64,
    pub silos: usize,
    pub rounds: usize,
    pub adversaries: Vec<usize>,
    /// Means over the last rounds of the fleet rows.
    pub final_cost: f64,
    pub final_rt_ms: f64,
    pub final_energy_j: f64,
    pub final_cvar95_ms: f64,
    pub final_violation_rate: f64,
    pub last_round_cost: f64,
    pub last_round_violation_rate: f64,
    pub detection_precision: Option<f64>,
    pub detection_recall: Option<f64>,
    pub audited_episodes: usize,
    pub invariant_violations: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub protocol: Vec<ProtocolRecord>,
    pub summary: RunSummary,
    /// First few invariant violations, rendered.
    pub violation_samples: Vec<String>,
}

impl RunOutput {
    pub fn fleet_curve(&self) -> Vec<f64> {
        self.metrics.iter().filter(|r| r.is_fleet()).map(|r| r.cost).collect()
    }

    /// Writes `metrics.csv`, `protocol.jsonl` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_metrics(BufWriter::new(File::create(dir.join("metrics.csv"))?), &self.metrics)?;
        write_protocol_log(BufWriter::new(File::create(dir.join("protocol.jsonl"))?), &self.protocol)?;
        let summary = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Environment(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        Ok(())
    }
}

struct SiloSlot {
    env: SiloEnv,
    eval_env: SiloEnv,
    learner: SiloLearner,
    eval_apps: Vec<Vec<DagApp>>,
    tracker: TrackingVariable,
    adversary: AdversarySpec,
}

#[derive(Clone, Debug, Default)]
struct Evaluation {
    cost: f64,
    rt_ms: f64,
    energy_j: f64,
    cvar_ms: f64,
    violation_rate: f64,
}

impl Evaluation {
    fn from_costs(costs: &[CostBreakdown]) -> Self {
        let avg = |f: fn(&CostBreakdown) -> f64| mean(&costs.iter().map(f).collect::<Vec<_>>());
        Evaluation {
            cost: avg(|c| c.total),
            rt_ms: avg(|c| c.mean_rt_ms),
            energy_j: avg(|c| c.energy_j),
            cvar_ms: avg(|c| c.cvar_ms),
            violation_rate: avg(|c| c.violation_rate()),
        }
    }
}

impl SiloSlot {
    fn new(silo: &Silo, cfg: &ExperimentConfig, seed: u64, actor: ActorModel, critic: CriticParams) -> Result<Self> {
        let silo = Arc::new(silo.clone());
        let mut env = SiloEnv::new(silo.clone(), cfg.env_config(), seed)?;
        let norm = calibrate_normalizer(&mut env, cfg.workload.warmup_decisions, seed)?;
        let mut eval_env = SiloEnv::new(silo.clone(), cfg.env_config(), seed)?;
        eval_env.set_normalizer(norm);
        let eval_apps = (0..cfg.workload.eval_episodes as u64)
            .map(|e| episode_apps(&silo, cfg.workload.apps_per_episode, seed, tag::EVAL, e))
            .collect();
        let tracker = TrackingVariable::zeros(critic.param_count());
        let mut learner = SiloLearner::new(
            actor,
            critic,
            cfg.learner_config(),
            cfg.features.clone(),
            stream(seed, tag::POLICY, silo.id as u64),
        );
        learner.audit = cfg.check_invariants;
        Ok(SiloSlot {
            env,
            eval_env,
            learner,
            eval_apps,
            tracker,
            adversary: AdversarySpec::HONEST,
        })
    }

    fn evaluate(&mut self) -> Result<Evaluation> {
        let costs = self
            .eval_apps
            .clone()
            .into_iter()
            .map(|apps| self.learner.evaluate(&mut self.eval_env, apps))
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluation::from_costs(&costs))
    }
}

fn initial_models(cfg: &ExperimentConfig, fleet: &Fleet, seed: u64) -> (ActorModel, CriticParams) {
    let t = &cfg.training;
    let mut rng = stream(seed, tag::ACTOR_INIT, 0);
    let actor = if cfg.variant.fixed_head() {
        let slots = fleet.silos.iter().map(|s| s.resources.len()).max().unwrap_or(1);
        ActorModel::FixedHead(FixedHeadParams::init(t.actor_hidden, slots, &mut rng))
    } else {
        ActorModel::Scoring(ActorParams::init(t.actor_hidden, &mut rng))
    };
    let critic = CriticParams::init(t.critic_hidden, &mut stream(seed, tag::CRITIC_INIT, 0));
    (actor, critic)
}

/// Runs one seeded experiment: warmup, then `rounds` of local training,
/// aggregation, and greedy evaluation.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let fleet = Fleet::build(&cfg.fleet.spec(), seed)?;
    let m = fleet.len();
    let (actor, critic) = initial_models(cfg, &fleet, seed);
    let mut slots = fleet
        .silos
        .par_iter()
        .map(|silo| SiloSlot::new(silo, cfg, seed, actor.clone(), critic.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mixing = cfg.variant.mixing();
    let attackers: Vec<usize> = if mixing.is_some() {
        let mut ids: Vec<usize> = sample(&mut stream(seed, tag::ADVERSARY, 0), m, cfg.adversaries.count(m)).into_vec();
        ids.sort_unstable();
        ids
    } else {
        Vec::new()
    };
    for &a in &attackers {
        slots[a].adversary = AdversarySpec {
            mode: cfg.adversaries.mode,
            intensity: cfg.adversaries.intensity,
        };
    }
    let (d_max, k_sample) = effective_degree(m, cfg.federation.d_max, cfg.federation.k_sample);
    let mut topology = build_topology(&fleet, d_max, k_sample, &mut stream(seed, tag::TOPOLOGY, 0))?;
    let mut gossip_rng = stream(seed, tag::GOSSIP, 0);

    let mut metrics = Vec::new();
    let mut protocol = Vec::new();
    let omega = cfg.training.local_episodes;
    for round in 1..=cfg.rounds {
        let starts: Vec<Vec<f64>> = slots.iter().map(|s| s.learner.actor.flat()).collect();
        let outputs: Vec<LocalRoundOutput> = slots
            .par_iter_mut()
            .map(|s| s.learner.local_round(&mut s.env, omega))
            .collect::<Result<_>>()?;

        let records = match &mixing {
            Some(rule) => {
                let mut participants: Vec<Participant> = slots
                    .iter()
                    .zip(&outputs)
                    .zip(starts)
                    .map(|((s, out), start)| Participant {
                        actor: s.learner.actor.flat(),
                        actor_start: start,
                        critic: s.learner.critic.flat(),
                        fingerprint: out.fingerprint.clone(),
                        critic_grad: out.critic_grad.clone(),
                        tracker: s.tracker.clone(),
                        adversary: s.adversary,
                    })
                    .collect();
                let records = gossip_round(
                    &mut participants,
                    &mut topology,
                    &fleet,
                    rule,
                    &cfg.federation,
                    round,
                    &mut gossip_rng,
                )?;
                for (s, p) in slots.iter_mut().zip(participants) {
                    s.learner.actor.set_flat(&p.actor)?;
                    s.learner.critic.set_flat(&p.critic)?;
                    s.tracker = p.tracker;
                }
                records
            }
            None => Vec::new(),
        };

        let evals: Vec<Evaluation> = slots.par_iter_mut().map(|s| s.evaluate()).collect::<Result<_>>()?;
        let is_attacker = |j: usize| attackers.contains(&j);
        let mut rows = Vec::with_capacity(m + 1);
        for i in 0..m {
            let (tp, fp, fn_) = records.get(i).map_or((0, 0, 0), |r| r.detection_counts(is_attacker));
            let st = &outputs[i].stats;
            let e = &evals[i];
            rows.push(MetricsRecord {
                round,
                silo: i.to_string(),
                cost: e.cost,
                rt_ms: e.rt_ms,
                energy_j: e.energy_j,
                cvar95_ms: e.cvar_ms,
                violation_rate: e.violation_rate,
                anomaly_tp: tp,
                anomaly_fp: fp,
                anomaly_fn: fn_,
                precision: rate_or_one(tp, tp + fp),
                recall: rate_or_one(tp, tp + fn_),
                clip_fraction: st.clip_fraction,
                episode_return: st.episode_return,
                mean_advantage: st.mean_advantage,
                critic_loss: st.critic_loss,
                honest: !is_attacker(i),
            });
        }
        let fleet_row = fleet_mean(round, &rows);
        for r in rows.iter().chain(std::iter::once(&fleet_row)) {
            r.check()?;
        }
        metrics.extend(rows);
        metrics.push(fleet_row);
        protocol.extend(records);
        log::debug!("{} seed {seed} round {round} done", cfg.variant);
    }

    let violations: Vec<String> = slots
        .iter()
        .flat_map(|s| s.learner.violations.iter().map(|v| format!("silo {}: {v:?}", s.env.silo().id)))
        .collect();
    let summary = summarize(cfg, seed, m, &attackers, &metrics, &slots, violations.len());
    Ok(RunOutput {
        metrics,
        protocol,
        summary,
        violation_samples: violations.into_iter().take(10).collect(),
    })
}

fn fleet_mean(round: usize, rows: &[MetricsRecord]) -> MetricsRecord {
    let honest: Vec<&MetricsRecord> = rows.iter().filter(|r| r.honest).collect();
    let avg = |f: fn(&MetricsRecord) -> f64| mean(&honest.iter().map(|r| f(r)).collect::<Vec<_>>());
    let sum = |f: fn(&MetricsRecord) -> usize| honest.iter().map(|r| f(r)).sum::<usize>();
    let (tp, fp, fn_) = (sum(|r| r.anomaly_tp), sum(|r| r.anomaly_fp), sum(|r| r.anomaly_fn));
    MetricsRecord {
        round,
        silo: FLEET.into(),
        cost: avg(|r| r.cost),
        rt_ms: avg(|r| r.rt_ms),
        energy_j: avg(|r| r.energy_j),
        cvar95_ms: avg(|r| r.cvar95_ms),
        violation_rate: avg(|r| r.violation_rate),
        anomaly_tp: tp,
        anomaly_fp: fp,
        anomaly_fn: fn_,
        precision: rate_or_one(tp, tp + fp),
        recall: rate_or_one(tp, tp + fn_),
        clip_fraction: avg(|r| r.clip_fraction),
        episode_return: avg(|r| r.episode_return),
        mean_advantage: avg(|r| r.mean_advantage),
        critic_loss: avg(|r| r.critic_loss),
        honest: true,
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    seed: u64,
    silos: usize,
    attackers: &[usize],
    metrics: &[MetricsRecord],
    slots: &[SiloSlot],
    invariant_violations: usize,
) -> RunSummary {
    let fleet: Vec<&MetricsRecord> = metrics.iter().filter(|r| r.is_fleet()).collect();
    let tail = &fleet[fleet.len().saturating_sub(FINAL_WINDOW)..];
    let avg = |f: fn(&MetricsRecord) -> f64| {
        if tail.is_empty() {
            f64::NAN
        } else {
            mean(&tail.iter().map(|r| f(r)).collect::<Vec<_>>())
        }
    };
    let late: Vec<&&MetricsRecord> = fleet.iter().filter(|r| r.round > DETECTION_WARMUP_ROUNDS).collect();
    let (tp, fp, fn_) = late.iter().fold((0, 0, 0), |(a, b, c), r| {
        (a + r.anomaly_tp, b + r.anomaly_fp, c + r.anomaly_fn)
    });
    let last = fleet.last();
    RunSummary {
        name: cfg.name.clone(),
        variant: cfg.variant,
        seed,
        silos,
        rounds: cfg.rounds,
        adversaries: attackers.to_vec(),
        final_cost: avg(|r| r.cost),
        final_rt_ms: avg(|r| r.rt_ms),
        final_energy_j: avg(|r| r.energy_j),
        final_cvar95_ms: avg(|r| r.cvar95_ms),
        final_violation_rate: avg(|r| r.violation_rate),
        last_round_cost: last.map_or(f64::NAN, |r| r.cost),
        last_round_violation_rate: last.map_or(f64::NAN, |r| r.violation_rate),
        detection_precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        detection_recall: (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64),
        audited_episodes: slots.iter().map(|s| s.learner.audited_episodes).sum(),
        invariant_violations,
    }
}
