use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::empirical_cvar;

/// Objective weights and risk settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Objective {
    pub lambda_rt: f64,
    pub lambda_energy: f64,
    pub cvar_alpha: f64,
    pub cvar_beta: f64,
    pub deadline_penalty: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            lambda_rt: 0.5,
            lambda_energy: 0.5,
            cvar_alpha: 0.95,
            cvar_beta: 0.3,
            deadline_penalty: 10.0,
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        let p = |f: &str| format!("objective.{f}");
        if !(self.cvar_alpha > 0.0 && self.cvar_alpha < 1.0) {
            return Err(Error::config(p("cvar_alpha"), "must lie in (0, 1)"));
        }
        if !(self.cvar_beta >= 0.0) {
            return Err(Error::config(p("cvar_beta"), "must be non-negative"));
        }
        if !(self.lambda_rt >= 0.0 && self.lambda_energy >= 0.0) {
            return Err(Error::config(p("lambda_rt"), "weights must be non-negative"));
        }
        if !(self.deadline_penalty >= 0.0) {
            return Err(Error::config(p("deadline_penalty"), "must be non-negative"));
        }
        Ok(())
    }
}

/// Frozen min/max extrema from the warmup window. Response-time extrema are
/// per-application times in ms; energy extrema are per-decision joules with
/// the episode's idle energy spread evenly over its decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub rt_min: f64,
    pub rt_max: f64,
    pub energy_min: f64,
    pub energy_max: f64,
    /// Reference quantile for per-app tail credit; refreshed every episode.
    pub eta_ref: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            rt_min: 0.0,
            rt_max: 1000.0,
            energy_min: 0.0,
            energy_max: 100.0,
            eta_ref: 0.0,
        }
    }
}

impl Normalizer {
    pub fn rt_range(&self) -> f64 {
        (self.rt_max - self.rt_min).max(1e-9)
    }

    pub fn energy_range(&self) -> f64 {
        (self.energy_max - self.energy_min).max(1e-9)
    }
}

/// Everything an episode accrued that the cost model needs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLedger {
    /// Realized response time per completed app, completion order.
    pub response_ms: Vec<f64>,
    pub violated: Vec<bool>,
    pub decision_energy_j: Vec<f64>,
    pub idle_energy_j: f64,
    pub normalizer: Normalizer,
}

impl EpisodeLedger {
    pub fn total_energy_j(&self) -> f64 {
        self.decision_energy_j.iter().sum::<f64>() + self.idle_energy_j
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Sum of response times plus the beta-weighted CVaR term, ms.
    pub rt_cost: f64,
    pub energy_j: f64,
    pub rt_norm: f64,
    pub energy_norm: f64,
    pub total: f64,
    pub mean_rt_ms: f64,
    pub eta_ms: f64,
    pub cvar_ms: f64,
    pub violations: usize,
    pub apps: usize,
    pub decisions: usize,
}

impl CostBreakdown {
    pub fn violation_rate(&self) -> f64 {
        self.violations as f64 / self.apps.max(1) as f64
    }
}

/// Episode cost: response time with a CVaR tail term, total energy, both
/// min-max normalized, clamped and weighted.
pub fn silo_cost(ledger: &EpisodeLedger, objective: &Objective) -> Result<CostBreakdown> {
    let b = ledger.response_ms.len();
    if b == 0 {
        return Err(Error::EmptyInput("cost window has no completed applications"));
    }
    let n = ledger.decision_energy_j.len().max(1);
    let (eta, cvar) = empirical_cvar(&ledger.response_ms, objective.cvar_alpha)?;
    let sum_rt: f64 = ledger.response_ms.iter().sum();
    let rt_cost = sum_rt + objective.cvar_beta * b as f64 * cvar;
    let energy = ledger.total_energy_j();
    let norm = &ledger.normalizer;
    let k = 1.0 + objective.cvar_beta;
    let rt_norm = ((rt_cost / b as f64 - k * norm.rt_min) / (k * norm.rt_range())).clamp(0.0, 1.0);
    let energy_norm = ((energy / n as f64 - norm.energy_min) / norm.energy_range()).clamp(0.0, 1.0);
    Ok(CostBreakdown {
        rt_cost,
        energy_j: energy,
        rt_norm,
        energy_norm,
        total: objective.lambda_rt * rt_norm + objective.lambda_energy * energy_norm,
        mean_rt_ms: sum_rt / b as f64,
        eta_ms: eta,
        cvar_ms: cvar,
        violations: ledger.violated.iter().filter(|v| **v).count(),
        apps: b,
        decisions: ledger.decision_energy_j.len(),
    })
}

/// Dense per-decision reward: weighted, normalized incremental energy.
pub fn dense_energy_reward(delta_j: f64, decisions: usize, norm: &Normalizer, objective: &Objective) -> f64 {
    if delta_j == 0.0 {
        return 0.0;
    }
    -objective.lambda_energy * delta_j / (decisions.max(1) as f64 * norm.energy_range())
}

/// One app's unweighted share of the normalized response-time cost, using
/// the reference quantile in place of the episode quantile.
pub fn app_cost_share(response_ms: f64, apps: usize, norm: &Normalizer, objective: &Objective) -> f64 {
    let tail = (response_ms - norm.eta_ref).max(0.0) / (1.0 - objective.cvar_alpha);
    let q = response_ms + objective.cvar_beta * (norm.eta_ref + tail);
    let k = 1.0 + objective.cvar_beta;
    (q - k * norm.rt_min) / (apps.max(1) as f64 * k * norm.rt_range())
}

/// Terminal reward of an application: negative normalized cost, minus the
/// deadline penalty when violated.
pub fn terminal_reward(normalized_cost: f64, violated: bool, penalty: f64) -> f64 {
    -normalized_cost - if violated { penalty } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger(times: Vec<f64>) -> EpisodeLedger {
        EpisodeLedger {
            violated: vec![false; times.len()],
            response_ms: times,
            decision_energy_j: vec![1.0, 2.0],
            idle_energy_j: 0.5,
            normalizer: Normalizer {
                rt_min: 0.0,
                rt_max: 10_000.0,
                energy_min: 0.0,
                energy_max: 10.0,
                eta_ref: 0.0,
            },
        }
    }

    #[test]
    fn beta_zero_reduces_to_sum_of_times() {
        let obj = Objective {
            cvar_beta: 0.0,
            ..Objective::default()
        };
        let c = silo_cost(&ledger(vec![100.0, 300.0, 200.0]), &obj).unwrap();
        assert_eq!(c.rt_cost, 600.0);
    }

    #[test]
    fn identical_times_give_one_plus_beta_per_app() {
        let obj = Objective::default();
        let c = silo_cost(&ledger(vec![400.0; 6]), &obj).unwrap();
        assert_eq!(c.cvar_ms, 400.0);
        assert!((c.rt_cost - 6.0 * 1.3 * 400.0).abs() < 1e-9);
    }

    #[test]
    fn empty_window_errors() {
        assert!(silo_cost(&ledger(vec![]), &Objective::default()).is_err());
    }

    #[test]
    fn normalized_terms_are_clamped() {
        let obj = Objective::default();
        let c = silo_cost(&ledger(vec![1e9]), &obj).unwrap();
        assert_eq!(c.rt_norm, 1.0);
        assert!((0.0..=1.0).contains(&c.energy_norm));
        assert!(c.total <= 1.0);
    }

    #[test]
    fn reward_examples() {
        let obj = Objective::default();
        assert_eq!(dense_energy_reward(0.0, 10, &Normalizer::default(), &obj), 0.0);
        assert_eq!(terminal_reward(0.3, false, 10.0), -0.3);
        assert_eq!(terminal_reward(0.3, true, 10.0), -10.3);
        // The penalty dominates the largest possible weighted normalized cost.
        assert!(obj.deadline_penalty > obj.lambda_rt + obj.lambda_energy);
    }

    #[test]
    fn app_shares_sum_to_normalized_rt_when_quantile_matches() {
        let obj = Objective::default();
        let times = vec![120.0, 400.0, 90.0, 800.0, 310.0];
        let mut l = ledger(times.clone());
        let (eta, _) = empirical_cvar(&times, obj.cvar_alpha).unwrap();
        l.normalizer.eta_ref = eta;
        let c = silo_cost(&l, &obj).unwrap();
        let shares: f64 = times.iter().map(|t| app_cost_share(*t, times.len(), &l.normalizer, &obj)).sum();
        assert!((shares - c.rt_norm).abs() < 1e-12);
    }
}
