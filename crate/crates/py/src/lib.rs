//! Python bindings: experiment configs and runs, fleets, a steppable silo
//! environment, and the numeric building blocks.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use silofed_core::federation;
use silofed_core::harness::{self, ExperimentConfig, Preset, Variant};
use silofed_core::infra::{Fleet, FleetSpec};
use silofed_core::learner;
use silofed_core::numerics;
use silofed_core::simenv::{self, EnvConfig};
use silofed_core::Error;

fn to_py(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.category());
    match e {
        Error::Io(_) => PyIOError::new_err(msg),
        Error::Environment(_) | Error::StaleTape | Error::NonFinite(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_value<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "ExperimentConfig", module = "silofed")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// `preset` is "desk" or "paper20".
    #[new]
    #[pyo3(signature = (preset = "desk"))]
    fn new(preset: &str) -> PyResult<Self> {
        let p = match preset {
            "desk" => Preset::Desk,
            "paper20" => Preset::Paper20,
            other => return Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
        };
        Ok(PyConfig {
            inner: ExperimentConfig::preset(p),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::from_toml(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::load(&path).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    #[setter]
    fn set_rounds(&mut self, rounds: usize) {
        self.inner.rounds = rounds;
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.name().to_string()
    }

    #[setter]
    fn set_variant(&mut self, name: &str) -> PyResult<()> {
        self.inner.variant = Variant::parse(name).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn silos(&self) -> usize {
        self.inner.fleet.silos
    }

    #[setter]
    fn set_silos(&mut self, m: usize) {
        self.inner.fleet.silos = m;
    }

    #[getter]
    fn adversary_fraction(&self) -> f64 {
        self.inner.adversaries.fraction
    }

    #[setter]
    fn set_adversary_fraction(&mut self, f: f64) {
        self.inner.adversaries.fraction = f;
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(variant={}, silos={}, rounds={})",
            self.inner.variant.name(),
            self.inner.fleet.silos,
            self.inner.rounds
        )
    }
}

#[pyclass(name = "RunOutput", module = "silofed")]
struct PyRunOutput {
    inner: harness::RunOutput,
}

#[pymethods]
impl PyRunOutput {
    /// Summary as a dict.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.inner.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_value(py, &text)
    }

    /// Fleet-mean cost per round.
    fn fleet_curve(&self) -> Vec<f64> {
        self.inner.fleet_curve()
    }

    fn metrics_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        harness::write_metrics(&mut buf, &self.inner.metrics).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn protocol_records(&self) -> usize {
        self.inner.protocol.len()
    }

    /// Writes metrics.csv, protocol.jsonl and summary.json into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write(&dir).map_err(to_py)
    }
}

/// Runs one seeded experiment; the GIL is released while it trains.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyConfig, seed: u64) -> PyResult<PyRunOutput> {
    let cfg = config.inner.clone();
    let out = py
        .detach(move || harness::run_experiment(&cfg, seed))
        .map_err(to_py)?;
    Ok(PyRunOutput { inner: out })
}

#[pyclass(name = "Fleet", module = "silofed")]
struct PyFleet {
    inner: Arc<Fleet>,
}

#[pymethods]
impl PyFleet {
    #[new]
    #[pyo3(signature = (silos, seed, min_resources = 6, max_resources = 10))]
    fn new(silos: usize, seed: u64, min_resources: usize, max_resources: usize) -> PyResult<Self> {
        let spec = FleetSpec {
            silos,
            resources: (min_resources, max_resources),
            ..FleetSpec::default()
        };
        Ok(PyFleet {
            inner: Arc::new(Fleet::build(&spec, seed).map_err(to_py)?),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyFleet {
            inner: Arc::new(Fleet::load(&path).map_err(to_py)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Resource count of each silo.
    fn resource_counts(&self) -> Vec<usize> {
        self.inner.silos.iter().map(|s| s.resources.len()).collect()
    }
}

/// One silo's scheduling environment driven step by step.
#[pyclass(name = "SiloEnv", module = "silofed")]
struct PySiloEnv {
    inner: simenv::SiloEnv,
}

#[pymethods]
impl PySiloEnv {
    #[new]
    #[pyo3(signature = (fleet, silo, seed, apps_per_episode = 12))]
    fn new(fleet: &PyFleet, silo: usize, seed: u64, apps_per_episode: usize) -> PyResult<Self> {
        let s = fleet
            .inner
            .silos
            .get(silo)
            .ok_or_else(|| PyValueError::new_err(format!("no silo {silo}")))?;
        let cfg = EnvConfig {
            apps_per_episode,
            ..EnvConfig::default()
        };
        let mut env = simenv::SiloEnv::new(Arc::new(s.clone()), cfg, seed).map_err(to_py)?;
        let norm = simenv::calibrate_normalizer(&mut env, 200, seed).map_err(to_py)?;
        env.set_normalizer(norm);
        Ok(PySiloEnv { inner: env })
    }

    fn reset(&mut self) -> PyResult<()> {
        self.inner.reset().map_err(to_py)
    }

    /// Feasibility mask of the pending decision, or None when the episode is over.
    fn feasible(&self) -> Option<Vec<bool>> {
        self.inner.pending().map(|p| p.feasible.clone())
    }

    /// Applies `action`; returns (dense reward, summed terminal credits, done).
    fn step(&mut self, action: usize) -> PyResult<(f64, f64, bool)> {
        let out = self.inner.step(action).map_err(to_py)?;
        let credit = out.credits.iter().map(|c| c.reward).sum();
        Ok((out.dense_reward, credit, out.done))
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn now_ms(&self) -> f64 {
        self.inner.now_ms()
    }

    /// Episode cost breakdown once done, as a dict.
    fn cost<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        match self.inner.cost() {
            None => Ok(None),
            Some(c) => {
                let text = serde_json::to_string(c).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
                json_value(py, &text).map(Some)
            }
        }
    }
}

/// (advantages, value targets).
#[pyfunction]
fn gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    dones: Vec<bool>,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    learner::gae(&rewards, &values, &next_values, &dones, gamma, lam).map_err(to_py)
}

/// (VaR, CVaR) of the upper tail at level `alpha`.
#[pyfunction]
fn empirical_cvar(xs: Vec<f64>, alpha: f64) -> PyResult<(f64, f64)> {
    numerics::empirical_cvar(&xs, alpha).map_err(to_py)
}

#[pyfunction]
fn masked_softmax(scores: Vec<f64>, mask: Vec<bool>) -> PyResult<Vec<f64>> {
    numerics::masked_softmax(&scores, &mask).map_err(to_py)
}

/// (threshold, flagged indices).
#[pyfunction]
fn detect_anomalies(sims: Vec<f64>, xi: f64) -> PyResult<(f64, Vec<usize>)> {
    federation::detect_anomalies(&sims, xi).map_err(to_py)
}

#[pyfunction]
fn similarity_weights(sims: Vec<f64>, nu: f64) -> PyResult<Vec<f64>> {
    federation::similarity_weights(&sims, nu).map_err(to_py)
}

#[pymodule]
fn silofed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunOutput>()?;
    m.add_class::<PyFleet>()?;
    m.add_class::<PySiloEnv>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cvar, m)?)?;
    m.add_function(wrap_pyfunction!(masked_softmax, m)?)?;
    m.add_function(wrap_pyfunction!(detect_anomalies, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_weights, m)?)?;
    m.add("VARIANTS", Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    Ok(())
}
