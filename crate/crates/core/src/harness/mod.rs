//! Experiment orchestration: configuration, seeded runs, variant, scale and
//! attack sweeps, metrics files, and SVG charts.

mod config;
mod metrics;
mod plot;
mod run;
mod suite;

pub use config::{
    AdversarySection, ExperimentConfig, FleetSection, Preset, TrainingSection, Variant, WorkloadSection,
};
pub use metrics::{read_metrics, write_metrics, MetricsRecord, FLEET, METRICS_COLUMNS};
pub use plot::{emit_plots, render_chart, Series, PLOTTED_METRICS};
pub use run::{run_experiment, RunOutput, RunSummary, DETECTION_WARMUP_ROUNDS, FINAL_WINDOW};
pub use suite::{attack_sweep, run_configs, run_variant_suite, scale_sweep, SuiteEntry, SuiteReport};
