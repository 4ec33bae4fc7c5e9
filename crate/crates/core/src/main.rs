use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use silofed_core::harness::{
    attack_sweep, emit_plots, run_experiment, run_variant_suite, scale_sweep, ExperimentConfig, Preset, SuiteReport,
    Variant,
};
use silofed_core::{Error, Result};

#[derive(Parser)]
#[command(name = "silofed", version, about = "Federated multi-silo DAG scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Variant name, e.g. full, no-gt, naive-averaging.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Compare the full method against ablations and baselines.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Sweep the number of silos.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "4,8,12")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "full,naive-averaging")]
        variants: Vec<String>,
    },
    /// Sweep the share of adversarial silos.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.3")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "full,no-defense")]
        variants: Vec<String>,
    },
    /// Render SVG charts from metrics CSV files.
    Plot {
        /// Metrics files, optionally as `label=path`.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(common.preset),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(rounds) = common.rounds {
        cfg.rounds = rounds;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn variants(names: &[String]) -> Result<Vec<Variant>> {
    names.iter().map(|n| Variant::parse(n.trim())).collect()
}

fn report(suite: &SuiteReport, out: &Path) {
    for e in &suite.entries {
        println!(
            "{:<24} final cost {:.4}  violation rate {:.3}",
            e.label, e.mean_final_cost, e.mean_final_violation_rate
        );
    }
    println!("ordering: {}", suite.ordering.join(" < "));
    println!("wrote {}", out.join("suite.json").display());
}

fn plot_input(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) => (label.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(arg);
            let label = path
                .parent()
                .and_then(|p| p.file_name())
                .map_or_else(|| arg.to_string(), |n| n.to_string_lossy().into_owned());
            (label, path)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, variant } => {
            let mut cfg = load(&common)?;
            if let Some(v) = variant {
                cfg.variant = Variant::parse(&v)?;
            }
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
            for &seed in &cfg.seeds {
                let run = run_experiment(&cfg, seed)?;
                let dir = common.out.join(format!("seed-{seed}"));
                run.write(&dir)?;
                println!(
                    "{} seed {seed}: final cost {:.4}, violation rate {:.3} -> {}",
                    cfg.variant,
                    run.summary.final_cost,
                    run.summary.final_violation_rate,
                    dir.display()
                );
                if run.summary.invariant_violations > 0 {
                    return Err(Error::Environment(format!(
                        "{} schedule invariant violations, first: {}",
                        run.summary.invariant_violations, run.violation_samples[0]
                    )));
                }
            }
        }
        Command::Ablate { common, variants: names } => {
            let cfg = load(&common)?;
            let list = match names {
                Some(n) => variants(&n)?,
                None => {
                    let mut v = vec![Variant::Full];
                    v.extend(Variant::ABLATIONS);
                    v.extend([Variant::NoAggregation, Variant::NaiveAveraging]);
                    v
                }
            };
            report(&run_variant_suite(&cfg, &list, Some(&common.out))?, &common.out);
        }
        Command::Scale {
            common,
            sizes,
            variants: names,
        } => {
            let cfg = load(&common)?;
            report(&scale_sweep(&cfg, &sizes, &variants(&names)?, Some(&common.out))?, &common.out);
        }
        Command::Attack {
            common,
            fractions,
            variants: names,
        } => {
            let cfg = load(&common)?;
            report(&attack_sweep(&cfg, &fractions, &variants(&names)?, Some(&common.out))?, &common.out);
        }
        Command::Plot { inputs, out } => {
            let inputs: Vec<(String, PathBuf)> = inputs.iter().map(|a| plot_input(a)).collect();
            for path in emit_plots(&inputs, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
