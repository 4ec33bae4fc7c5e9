use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Variant};
use super::run::{run_experiment, RunOutput, RunSummary};
use crate::error::{Error, Result};
use crate::numerics::mean;

/// All seeds of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub label: String,
    pub variant: Variant,
    pub silos: usize,
    pub adversary_fraction: f64,
    pub runs: Vec<RunSummary>,
    /// Seed-mean fleet cost per round.
    pub curve: Vec<f64>,
    pub mean_final_cost: f64,
    pub mean_final_violation_rate: f64,
    pub mean_last_round_violation_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    /// Labels sorted by mean final cost, best first.
    pub ordering: Vec<String>,
}

impl SuiteReport {
    pub fn get(&self, label: &str) -> Option<&SuiteEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Environment(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Runs labelled configurations over every seed, writing each run under
/// `out/<label>/seed-<seed>` when `out` is given.
pub fn run_configs(configs: Vec<(String, ExperimentConfig)>, out: Option<&Path>) -> Result<SuiteReport> {
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, c))| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(usize, RunOutput)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (label, cfg) = &configs[i];
            let run = run_experiment(cfg, seed)?;
            if let Some(dir) = out {
                run.write(&dir.join(label).join(format!("seed-{seed}")))?;
            }
            log::info!("{label} seed {seed}: final cost {:.4}", run.summary.final_cost);
            Ok((i, run))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(configs.len());
    for (i, (label, cfg)) in configs.iter().enumerate() {
        let runs: Vec<&RunOutput> = results.iter().filter(|(j, _)| *j == i).map(|(_, r)| r).collect();
        let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.fleet_curve()).collect();
        let curve = (0..cfg.rounds)
            .map(|k| mean(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()))
            .collect();
        let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
        let avg = |f: fn(&RunSummary) -> f64| mean(&summaries.iter().map(f).collect::<Vec<_>>());
        entries.push(SuiteEntry {
            label: label.clone(),
            variant: cfg.variant,
            silos: cfg.fleet.silos,
            adversary_fraction: cfg.adversaries.fraction,
            mean_final_cost: avg(|s| s.final_cost),
            mean_final_violation_rate: avg(|s| s.final_violation_rate),
            mean_last_round_violation_rate: avg(|s| s.last_round_violation_rate),
            curve,
            runs: summaries,
        });
    }
    let mut ordering: Vec<&SuiteEntry> = entries.iter().collect();
    ordering.sort_by(|a, b| a.mean_final_cost.total_cmp(&b.mean_final_cost));
    let ordering = ordering.into_iter().map(|e| e.label.clone()).collect();
    let report = SuiteReport { entries, ordering };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        report.write(&dir.join("suite.json"))?;
    }
    Ok(report)
}

/// Same fleet, workloads and seeds under each variant.
pub fn run_variant_suite(base: &ExperimentConfig, variants: &[Variant], out: Option<&Path>) -> Result<SuiteReport> {
    let configs = variants
        .iter()
        .map(|&v| {
            (
                v.name().to_string(),
                ExperimentConfig {
                    variant: v,
                    ..base.clone()
                },
            )
        })
        .collect();
    run_configs(configs, out)
}

/// Each variant at each fleet size; labels are `<variant>@m<M>`.
pub fn scale_sweep(
    base: &ExperimentConfig,
    sizes: &[usize],
    variants: &[Variant],
    out: Option<&Path>,
) -> Result<SuiteReport> {
    let mut configs = Vec::new();
    for &m in sizes {
        for &v in variants {
            let mut cfg = ExperimentConfig {
                variant: v,
                ..base.clone()
            };
            cfg.fleet.silos = m;
            cfg.validate()?;
            configs.push((format!("{}@m{m}", v.name()), cfg));
        }
    }
    run_configs(configs, out)
}

/// Each variant at each adversary share; labels are `<variant>@a<percent>`.
pub fn attack_sweep(
    base: &ExperimentConfig,
    fractions: &[f64],
    variants: &[Variant],
    out: Option<&Path>,
) -> Result<SuiteReport> {
    let mut configs = Vec::new();
    for &f in fractions {
        for &v in variants {
            let mut cfg = ExperimentConfig {
                variant: v,
                ..base.clone()
            };
            cfg.adversaries.fraction = f;
            cfg.validate()?;
            configs.push((format!("{}@a{}", v.name(), (f * 100.0).round() as u32), cfg));
        }
    }
    run_configs(configs, out)
}
