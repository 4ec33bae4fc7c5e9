use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 17] = [
    "round",
    "silo",
    "cost",
    "rt_ms",
    "energy_j",
    "cvar95_ms",
    "violation_rate",
    "anomaly_tp",
    "anomaly_fp",
    "anomaly_fn",
    "precision",
    "recall",
    "clip_fraction",
    "episode_return",
    "mean_advantage",
    "critic_loss",
    "honest",
];

/// One row: a silo's greedy evaluation after a round, or the fleet mean
/// over honest silos (`silo == "fleet"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub silo: String,
    pub cost: f64,
    pub rt_ms: f64,
    pub energy_j: f64,
    pub cvar95_ms: f64,
    pub violation_rate: f64,
    pub anomaly_tp: usize,
    pub anomaly_fp: usize,
    pub anomaly_fn: usize,
    pub precision: f64,
    pub recall: f64,
    pub clip_fraction: f64,
    pub episode_return: f64,
    pub mean_advantage: f64,
    pub critic_loss: f64,
    pub honest: bool,
}

pub const FLEET: &str = "fleet";

impl MetricsRecord {
    pub fn is_fleet(&self) -> bool {
        self.silo == FLEET
    }

    pub fn check(&self) -> Result<()> {
        let values = [
            self.cost,
            self.rt_ms,
            self.energy_j,
            self.cvar95_ms,
            self.violation_rate,
            self.precision,
            self.recall,
            self.clip_fraction,
            self.episode_return,
            self.mean_advantage,
            self.critic_loss,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metrics record"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.violation_rate) && unit(self.precision) && unit(self.recall) && unit(self.clip_fraction)) {
            return Err(Error::InvalidParameter(format!("rate outside [0, 1] in round {}", self.round)));
        }
        Ok(())
    }
}

/// Ratio with the empty case defined as perfect.
pub fn rate_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn write_metrics<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(METRICS_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected metrics header".into(),
        });
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
