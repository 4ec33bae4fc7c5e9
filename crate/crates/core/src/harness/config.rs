use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{ActorMix, AdversaryMode, CriticMix, FederationConfig, MixingRule};
use crate::infra::{toml_line, FleetSpec};
use crate::learner::{AdvantageMode, LearnerConfig, OptimizerKind};
use crate::policy::FeatureScales;
use crate::simenv::{EnvConfig, Objective};

/// Training and aggregation variants compared by the ablation suite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Fixed-width output head with masking instead of per-candidate scoring.
    NoAsap,
    /// One-step TD advantages and an unclipped objective.
    NoGaeClip,
    /// Uniform averaging over all neighbors, no anomaly filter.
    NoGf,
    /// Critic parameter averaging instead of gradient tracking.
    NoGt,
    NoAggregation,
    /// Plain mean of actor and critic over self and all neighbors.
    NaiveAveraging,
    /// Similarity weights without the anomaly filter.
    NoDefense,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::NoAsap,
        Variant::NoGaeClip,
        Variant::NoGf,
        Variant::NoGt,
        Variant::NoAggregation,
        Variant::NaiveAveraging,
        Variant::NoDefense,
    ];

    pub const ABLATIONS: [Variant; 4] = [Variant::NoAsap, Variant::NoGaeClip, Variant::NoGf, Variant::NoGt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAsap => "no-asap",
            Variant::NoGaeClip => "no-gae-clip",
            Variant::NoGf => "no-gf",
            Variant::NoGt => "no-gt",
            Variant::NoAggregation => "no-aggregation",
            Variant::NaiveAveraging => "naive-averaging",
            Variant::NoDefense => "no-defense",
        }
    }

    pub fn parse(name: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{name}`")))
    }

    /// Aggregation stages, or `None` when silos never exchange anything.
    pub fn mixing(self) -> Option<MixingRule> {
        let full = MixingRule::FULL;
        match self {
            Variant::Full | Variant::NoAsap | Variant::NoGaeClip => Some(full),
            Variant::NoGf => Some(MixingRule {
                filter: false,
                similarity_weights: false,
                ..full
            }),
            Variant::NoGt => Some(MixingRule {
                critic: CriticMix::Average,
                ..full
            }),
            Variant::NoDefense => Some(MixingRule { filter: false, ..full }),
            Variant::NaiveAveraging => Some(MixingRule {
                filter: false,
                similarity_weights: false,
                actor: ActorMix::Replace,
                critic: CriticMix::Average,
            }),
            Variant::NoAggregation => None,
        }
    }

    pub fn fixed_head(self) -> bool {
        self == Variant::NoAsap
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSection {
    pub silos: usize,
    pub resources: [usize; 2],
    pub inter_silo_rtt_ms: [f64; 2],
}

impl Default for FleetSection {
    fn default() -> Self {
        FleetSection {
            silos: 8,
            resources: [6, 10],
            inter_silo_rtt_ms: [5.0, 100.0],
        }
    }
}

impl FleetSection {
    pub fn spec(&self) -> FleetSpec {
        FleetSpec {
            silos: self.silos,
            resources: (self.resources[0], self.resources[1]),
            inter_silo_rtt_ms: (self.inter_silo_rtt_ms[0], self.inter_silo_rtt_ms[1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub apps_per_episode: usize,
    /// Random-policy decisions used to freeze the cost normalizer.
    pub warmup_decisions: usize,
    /// Fixed greedy evaluation episodes per silo and round.
    pub eval_episodes: usize,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            apps_per_episode: 12,
            warmup_decisions: 300,
            eval_episodes: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    /// Local episodes between aggregation rounds.
    pub local_episodes: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
    pub grad_clip_norm: f64,
    pub optimizer: OptimizerKind,
    pub fingerprint_window: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let l = LearnerConfig::default();
        TrainingSection {
            actor_hidden: 128,
            critic_hidden: 128,
            local_episodes: 5,
            gamma: l.gamma,
            gae_lambda: l.gae_lambda,
            clip_epsilon: 0.2,
            actor_lr: l.actor_lr,
            critic_lr: l.critic_lr,
            normalize_advantages: l.normalize_advantages,
            grad_clip_norm: l.grad_clip_norm,
            optimizer: l.optimizer,
            fingerprint_window: l.fingerprint_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    /// Share of silos that misbehave, rounded to the nearest count.
    pub fraction: f64,
    pub mode: AdversaryMode,
    pub intensity: f64,
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            fraction: 0.0,
            mode: AdversaryMode::GradientReversal,
            intensity: 1.0,
        }
    }
}

impl AdversarySection {
    pub fn count(&self, silos: usize) -> usize {
        if self.mode == AdversaryMode::Honest {
            return 0;
        }
        ((self.fraction * silos as f64).round() as usize).min(silos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper20,
}

/// Everything one experiment needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub variant: Variant,
    /// Audit every episode's event log against the schedule invariants.
    pub check_invariants: bool,
    pub fleet: FleetSection,
    pub workload: WorkloadSection,
    pub objective: Objective,
    pub training: TrainingSection,
    pub federation: FederationConfig,
    pub features: FeatureScales,
    pub adversaries: AdversarySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Preset::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => ExperimentConfig {
                name: "desk".into(),
                seeds: vec![1, 2, 3, 4, 5],
                rounds: 60,
                variant: Variant::Full,
                check_invariants: false,
                fleet: FleetSection::default(),
                workload: WorkloadSection::default(),
                objective: Objective::default(),
                training: TrainingSection::default(),
                federation: FederationConfig::default(),
                features: FeatureScales::default(),
                adversaries: AdversarySection::default(),
            },
            Preset::Paper20 => ExperimentConfig {
                name: "paper20".into(),
                seeds: (1..=10).collect(),
                rounds: 100,
                fleet: FleetSection {
                    silos: 20,
                    resources: [6, 14],
                    ..FleetSection::default()
                },
                ..ExperimentConfig::preset(Preset::Desk)
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: toml_line(text, e.span()),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, msg: &str| Err(Error::config(path, msg));
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required");
        }
        let f = &self.fleet;
        if f.silos < 2 {
            return fail("fleet.silos", "at least 2 silos are required");
        }
        if f.resources[0] < 3 || f.resources[0] > f.resources[1] {
            return fail("fleet.resources", "expected [min, max] with 3 <= min <= max");
        }
        if !(f.inter_silo_rtt_ms[0] > 0.0 && f.inter_silo_rtt_ms[0] <= f.inter_silo_rtt_ms[1]) {
            return fail("fleet.inter_silo_rtt_ms", "expected [min, max] with 0 < min <= max");
        }
        let w = &self.workload;
        if w.apps_per_episode == 0 {
            return fail("workload.apps_per_episode", "must be at least 1");
        }
        if w.eval_episodes == 0 {
            return fail("workload.eval_episodes", "must be at least 1");
        }
        self.objective.validate()?;
        let t = &self.training;
        if t.actor_hidden == 0 || t.critic_hidden == 0 {
            return fail("training.actor_hidden", "hidden widths must be positive");
        }
        if t.local_episodes == 0 {
            return fail("training.local_episodes", "must be at least 1");
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(t.gamma) {
            return fail("training.gamma", "must lie in [0, 1]");
        }
        if !unit(t.gae_lambda) {
            return fail("training.gae_lambda", "must lie in [0, 1]");
        }
        if !(t.clip_epsilon > 0.0 && t.clip_epsilon < 1.0) {
            return fail("training.clip_epsilon", "must lie in (0, 1)");
        }
        if !(t.actor_lr > 0.0 && t.critic_lr > 0.0) {
            return fail("training.actor_lr", "learning rates must be positive");
        }
        if !(t.grad_clip_norm > 0.0) {
            return fail("training.grad_clip_norm", "must be positive");
        }
        if t.fingerprint_window == 0 {
            return fail("training.fingerprint_window", "must be at least 1");
        }
        self.federation.validate()?;
        let a = &self.adversaries;
        if !unit(a.fraction) {
            return fail("adversaries.fraction", "must lie in [0, 1]");
        }
        if !(a.intensity >= 0.0 && a.intensity.is_finite()) {
            return fail("adversaries.intensity", "must be non-negative");
        }
        if a.mode == AdversaryMode::IntermittentDrop && a.intensity > 1.0 {
            return fail("adversaries.intensity", "drop probability must lie in [0, 1]");
        }
        if a.count(f.silos) >= f.silos {
            return fail("adversaries.fraction", "at least one silo must stay honest");
        }
        Ok(())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        let t = &self.training;
        let ablated = self.variant == Variant::NoGaeClip;
        LearnerConfig {
            gamma: t.gamma,
            gae_lambda: t.gae_lambda,
            clip_epsilon: (!ablated).then_some(t.clip_epsilon),
            actor_lr: t.actor_lr,
            critic_lr: t.critic_lr,
            normalize_advantages: t.normalize_advantages,
            advantage_mode: if ablated { AdvantageMode::TdOne } else { AdvantageMode::Gae },
            grad_clip_norm: t.grad_clip_norm,
            optimizer: t.optimizer,
            fingerprint_window: t.fingerprint_window,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            apps_per_episode: self.workload.apps_per_episode,
            objective: self.objective.clone(),
            record_events: self.check_invariants,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Desk, Preset::Paper20] {
            let cfg = ExperimentConfig::preset(p);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
        let large = ExperimentConfig::preset(Preset::Paper20);
        assert_eq!((large.fleet.silos, large.rounds), (20, 100));
    }

    #[test]
    fn training_defaults() {
        let c = ExperimentConfig::default();
        let o = &c.objective;
        assert_eq!((o.cvar_alpha, o.cvar_beta, o.lambda_rt, o.lambda_energy), (0.95, 0.3, 0.5, 0.5));
        let t = &c.training;
        assert_eq!((t.gamma, t.actor_lr, t.critic_lr, t.gae_lambda, t.clip_epsilon), (0.99, 3e-4, 1e-3, 0.95, 0.2));
        let f = &c.federation;
        assert_eq!((f.d_max, f.k_sample, f.nu, f.xi, f.alpha_agg, f.alpha_cag), (5, 10, 0.1, 3.0, 0.3, 0.1));
        assert_eq!(t.fingerprint_window, 100);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("rounds = 3\n[fleet]\nsilos = 4\n").unwrap();
        assert_eq!((cfg.rounds, cfg.fleet.silos, cfg.fleet.resources), (3, 4, [6, 10]));
    }

    #[test]
    fn errors_carry_locations() {
        let err = ExperimentConfig::from_toml("rounds = 3\n[fleet]\nsilo = 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ExperimentConfig::from_toml("[training]\ngamma = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("training.gamma"), "{err}");
        let err = ExperimentConfig::from_toml("[adversaries]\nfraction = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("adversaries.fraction"), "{err}");
    }

    #[test]
    fn variant_flags() {
        assert!(Variant::NoAggregation.mixing().is_none());
        let gf = Variant::NoGf.mixing().unwrap();
        assert!(!gf.filter && !gf.similarity_weights);
        assert_eq!(Variant::NoGt.mixing().unwrap().critic, CriticMix::Average);
        assert!(Variant::NoAsap.fixed_head());
        let cfg = ExperimentConfig {
            variant: Variant::NoGaeClip,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.learner_config().clip_epsilon, None);
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
    }
}
