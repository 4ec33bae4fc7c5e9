use std::collections::HashMap;

use super::events::{EventRecord, LogEvent};
use super::{comm_time_ms, proc_time_ms};
use crate::infra::Silo;
use crate::workload::DagApp;

/// Slack for floating-point comparisons, ms or J.
const EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum InvariantViolation {
    ClockWentBackwards { index: usize },
    MissingRecord { app: usize, task: usize, what: &'static str },
    Precedence { app: usize, from: usize, to: usize, slack_ms: f64 },
    SerialCompute { resource: usize, at_ms: f64 },
    Memory { resource: usize, at_ms: f64 },
    Storage { resource: usize, at_ms: f64 },
    EnergyBudget { resource: usize, used_j: f64, budget_j: f64 },
}

#[derive(Default, Clone, Copy)]
struct TaskTimes {
    assign: Option<(f64, usize)>,
    start: Option<f64>,
    finish: Option<f64>,
}

/// Post-hoc check of one episode's event log: clock monotonicity,
/// precedence with transfer delays, one task at a time per resource,
/// memory/storage capacity, and battery budgets.
pub fn check_episode(log: &[EventRecord], apps: &[DagApp], silo: &Silo) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    for (i, w) in log.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            out.push(InvariantViolation::ClockWentBackwards { index: i + 1 });
        }
    }
    let mut times: HashMap<(usize, usize), TaskTimes> = HashMap::new();
    for r in log {
        let Some(task) = r.task else { continue };
        let e = times.entry((r.app, task)).or_default();
        match r.event {
            LogEvent::Assign => e.assign = r.resource.map(|n| (r.timestamp, n)),
            LogEvent::TaskStart => e.start = Some(r.timestamp),
            LogEvent::TaskComplete => e.finish = Some(r.timestamp),
            _ => {}
        }
    }
    let mut complete = HashMap::new();
    for app in apps {
        for t in 0..app.tasks.len() {
            let tt = times.get(&(app.id, t)).copied().unwrap_or_default();
            match (tt.assign, tt.start, tt.finish) {
                (Some(a), Some(s), Some(f)) => {
                    complete.insert((app.id, t), (a, s, f));
                }
                _ => out.push(InvariantViolation::MissingRecord {
                    app: app.id,
                    task: t,
                    what: "assign/start/complete",
                }),
            }
        }
    }
    if !out.is_empty() {
        return out;
    }

    let n = silo.resources.len();
    let mut busy = vec![0.0; n];
    let mut energy = vec![0.0; n];
    let mut intervals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    // (time, +1 admit / -1 release, resource, mem, storage)
    let mut occupancy: Vec<(f64, i8, usize, f64, f64)> = Vec::new();
    let mut end: f64 = 0.0;
    for app in apps {
        for (t, task) in app.tasks.iter().enumerate() {
            let ((at, host), start, finish) = complete[&(app.id, t)];
            let r = &silo.resources[host];
            let proc = proc_time_ms(task, r);
            if (finish - start - proc).abs() > EPS * proc.max(1.0) {
                out.push(InvariantViolation::SerialCompute { resource: host, at_ms: start });
            }
            busy[host] += proc;
            energy[host] += r.p_comp * proc / 1000.0;
            intervals[host].push((start, finish));
            occupancy.push((at, 1, host, task.m_req, task.d_req));
            occupancy.push((finish, -1, host, task.m_req, task.d_req));
            end = end.max(finish);
        }
        for e in &app.edges {
            let ((_, hu), _, fu) = complete[&(app.id, e.from)];
            let ((_, hv), sv, _) = complete[&(app.id, e.to)];
            let c = comm_time_ms(e.data_mb, hu, hv, silo);
            if fu + c > sv + EPS {
                out.push(InvariantViolation::Precedence {
                    app: app.id,
                    from: e.from,
                    to: e.to,
                    slack_ms: sv - fu - c,
                });
            }
            if hu != hv {
                energy[hu] += silo.resources[hu].p_send * c / 1000.0;
                energy[hv] += silo.resources[hv].p_recv * c / 1000.0;
            }
        }
    }
    for (host, iv) in intervals.iter_mut().enumerate() {
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in iv.windows(2) {
            if w[1].0 + EPS < w[0].1 {
                out.push(InvariantViolation::SerialCompute { resource: host, at_ms: w[1].0 });
            }
        }
    }
    // Releases at an instant happen before admissions at the same instant.
    occupancy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut mem = vec![0.0; n];
    let mut sto = vec![0.0; n];
    for (t, sign, host, m, d) in occupancy {
        mem[host] += f64::from(sign) * m;
        sto[host] += f64::from(sign) * d;
        if mem[host] > silo.resources[host].mem_mb() + EPS {
            out.push(InvariantViolation::Memory { resource: host, at_ms: t });
        }
        if sto[host] > silo.resources[host].storage_mb() + EPS {
            out.push(InvariantViolation::Storage { resource: host, at_ms: t });
        }
    }
    for (i, r) in silo.resources.iter().enumerate() {
        if let Some(budget) = r.energy_j {
            let used = energy[i] + r.p_standby * (end - busy[i]) / 1000.0;
            if used > budget + EPS {
                out.push(InvariantViolation::EnergyBudget {
                    resource: i,
                    used_j: used,
                    budget_j: budget,
                });
            }
        }
    }
    out
}
