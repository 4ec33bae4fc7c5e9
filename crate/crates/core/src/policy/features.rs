use serde::{Deserialize, Serialize};

use crate::infra::Silo;
use crate::simenv::{ObservedState, PendingDecision, BACKLOG_HORIZON_MS};

pub const TASK_DIM: usize = 8;
pub const RESOURCE_DIM: usize = 12;
pub const GLOBAL_DIM: usize = 8;
pub const STATE_DIM: usize = TASK_DIM + GLOBAL_DIM;

/// Divisors that map raw quantities into [0, 1]. Shared fleet-wide so the
/// resource features mean the same thing in every silo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureScales {
    pub cpu_mcycles: f64,
    pub task_mem_mb: f64,
    pub task_storage_mb: f64,
    pub out_degree: f64,
    pub freq_ghz: f64,
    pub mem_gb: f64,
    pub storage_gb: f64,
    pub queue_len: f64,
    pub bandwidth_mbps: f64,
    pub rtt_ms: f64,
    pub pending_apps: f64,
}

impl Default for FeatureScales {
    fn default() -> Self {
        FeatureScales {
            cpu_mcycles: 4000.0,
            task_mem_mb: 1024.0,
            task_storage_mb: 1024.0,
            out_degree: 5.0,
            freq_ghz: 4.0,
            mem_gb: 128.0,
            storage_gb: 2048.0,
            queue_len: 10.0,
            bandwidth_mbps: 25.0,
            rtt_ms: 25.0,
            pending_apps: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVectors {
    pub task: Vec<f64>,
    /// One row per resource of the silo, feasible or not.
    pub resources: Vec<Vec<f64>>,
    pub global: Vec<f64>,
    /// Task features followed by global features.
    pub state: Vec<f64>,
}

fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

pub fn extract_features(
    state: &ObservedState,
    decision: &PendingDecision,
    silo: &Silo,
    scales: &FeatureScales,
) -> FeatureVectors {
    let d = decision;
    let elapsed = state.now_ms - d.arrival_ms;
    let slack = ((d.deadline_ms - elapsed - d.remaining_critical_ms) / d.deadline_ms).clamp(-1.0, 1.0);
    let task = vec![
        unit(d.demand.f_req / scales.cpu_mcycles),
        unit(d.demand.m_req / scales.task_mem_mb),
        unit(d.demand.d_req / scales.task_storage_mb),
        0.5 + 0.5 * slack,
        unit(d.out_degree as f64 / scales.out_degree),
        unit(d.remaining_tasks as f64 / d.total_tasks.max(1) as f64),
        if d.max_depth == 0 { 0.0 } else { unit(d.depth as f64 / d.max_depth as f64) },
        1.0,
    ];

    let total_data: f64 = d.preds.iter().map(|p| p.data_mb).sum();
    let resources = silo
        .resources
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let (bw, rtt) = if d.preds.is_empty() || total_data <= 0.0 {
                (1.0, 0.0)
            } else {
                d.preds.iter().fold((0.0, 0.0), |(bw, rtt), p| {
                    let w = p.data_mb / total_data;
                    if p.host == n {
                        (bw + w, rtt)
                    } else {
                        (
                            bw + w * unit(silo.bandwidth_mbps[p.host][n] / scales.bandwidth_mbps),
                            rtt + w * unit(silo.rtt_ms[p.host][n] / scales.rtt_ms),
                        )
                    }
                })
            };
            let energy = r.energy_j.map_or(1.0, |b| {
                if b <= 0.0 {
                    0.0
                } else {
                    1.0 - state.utilization[n].energy
                }
            });
            let mut tier = [0.0; 3];
            tier[r.tier.index()] = 1.0;
            vec![
                unit(r.freq_ghz / scales.freq_ghz),
                unit(r.mem_gb / scales.mem_gb),
                unit(r.storage_gb / scales.storage_gb),
                unit(energy),
                unit(state.backlog_ms[n] / BACKLOG_HORIZON_MS),
                unit(state.queue_len[n] as f64 / scales.queue_len),
                unit(bw),
                unit(rtt),
                tier[0],
                tier[1],
                tier[2],
                1.0,
            ]
        })
        .collect();

    let n = state.utilization.len().max(1) as f64;
    let cpu: Vec<f64> = state.utilization.iter().map(|u| u.cpu).collect();
    let queues: Vec<f64> = state.queue_len.iter().map(|q| unit(*q as f64 / scales.queue_len)).collect();
    let feasible = d.feasible.iter().filter(|f| **f).count() as f64;
    let global = vec![
        unit(cpu.iter().sum::<f64>() / n),
        unit(cpu.iter().copied().fold(0.0, f64::max)),
        unit(queues.iter().sum::<f64>() / n),
        unit(queues.iter().copied().fold(0.0, f64::max)),
        unit(feasible / d.feasible.len().max(1) as f64),
        unit(state.pending_apps as f64 / scales.pending_apps),
        0.0,
        0.0,
    ];
    let mut st = task.clone();
    st.extend_from_slice(&global);
    FeatureVectors {
        task,
        resources,
        global,
        state: st,
    }
}
