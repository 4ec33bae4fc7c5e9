//! Per-silo discrete-event scheduling environment: readiness, transfers,
//! serial FIFO compute, energy accounting, cost normalization and rewards.

mod cost;
mod env;
mod events;
mod invariants;

pub use cost::{
    app_cost_share, dense_energy_reward, silo_cost, terminal_reward, CostBreakdown, EpisodeLedger,
    Normalizer, Objective,
};
pub use env::{
    calibrate_normalizer, episode_apps, Credit, EnvConfig, ObservedState, PendingDecision,
    PredPlacement, SiloEnv, StepOutcome, Utilization, BACKLOG_HORIZON_MS,
};
pub use events::{read_event_log, write_event_log, EventRecord, FifoQueue, LogEvent};
pub use invariants::{check_episode, InvariantViolation};

use crate::infra::{Resource, Silo};
use crate::workload::TaskNode;

/// Processing time in ms: megacycles over GHz.
pub fn proc_time_ms(task: &TaskNode, res: &Resource) -> f64 {
    task.f_req / res.freq_ghz
}

/// Transfer time in ms between two resources of one silo; zero when co-located.
pub fn comm_time_ms(data_mb: f64, src: usize, dst: usize, silo: &Silo) -> f64 {
    if src == dst {
        0.0
    } else {
        data_mb / silo.bandwidth_mbps[src][dst] * 1000.0 + silo.rtt_ms[src][dst]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::build_fleet;

    fn task(f_req: f64) -> TaskNode {
        TaskNode {
            id: 0,
            f_req,
            m_req: 1.0,
            d_req: 1.0,
        }
    }

    #[test]
    fn proc_time_examples() {
        let mut silo = build_fleet(2, 0).unwrap().silos.remove(0);
        silo.resources[0].freq_ghz = 1.0;
        assert_eq!(proc_time_ms(&task(1000.0), &silo.resources[0]), 1000.0);
        silo.resources[0].freq_ghz = 2.0;
        assert_eq!(proc_time_ms(&task(1000.0), &silo.resources[0]), 500.0);
        assert_eq!(proc_time_ms(&task(2000.0), &silo.resources[0]), 1000.0);
    }

    #[test]
    fn comm_time_examples() {
        let mut silo = build_fleet(2, 0).unwrap().silos.remove(0);
        assert_eq!(comm_time_ms(7.0, 1, 1, &silo), 0.0);
        silo.bandwidth_mbps[0][1] = 20.0;
        silo.rtt_ms[0][1] = 10.0;
        assert_eq!(comm_time_ms(10.0, 0, 1, &silo), 510.0);
        silo.rtt_ms[0][1] = 0.0;
        assert_eq!(comm_time_ms(10.0, 0, 1, &silo), 500.0);
    }
}
