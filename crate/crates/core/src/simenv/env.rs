use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cost::{
    app_cost_share, dense_energy_reward, silo_cost, terminal_reward, CostBreakdown, EpisodeLedger,
    Normalizer, Objective,
};
use super::events::{Event, EventKind, EventRecord, FifoQueue, LogEvent, QueuedTask};
use super::{comm_time_ms, proc_time_ms};
use crate::error::{Error, Result};
use crate::infra::Silo;
use crate::seeding::{self, tag};
use crate::workload::{generate_batch, DagApp, TaskNode};

/// Backlog at which the CPU utilization feature saturates.
pub const BACKLOG_HORIZON_MS: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub apps_per_episode: usize,
    pub objective: Objective,
    /// Keep an event log for export and invariant checks.
    pub record_events: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            apps_per_episode: 12,
            objective: Objective::default(),
            record_events: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub cpu: f64,
    pub memory: f64,
    pub storage: f64,
    pub energy: f64,
}

/// Observation at a decision point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedState {
    pub now_ms: f64,
    pub utilization: Vec<Utilization>,
    /// Tasks admitted to each resource and not yet finished.
    pub queue_len: Vec<usize>,
    /// Committed processing not yet executed, ms.
    pub backlog_ms: Vec<f64>,
    /// Diagonal: mean outgoing bandwidth (MB/s); off-diagonal: RTT (ms).
    pub network: Arc<Vec<Vec<f64>>>,
    pub pending_apps: usize,
    pub pending_tasks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredPlacement {
    pub host: usize,
    pub data_mb: f64,
}

/// The task awaiting placement and everything the policy may condition on.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingDecision {
    pub app: usize,
    pub task: usize,
    pub ready_ms: f64,
    pub feasible: Vec<bool>,
    /// True when no resource passed the hard checks and the fallback chose one.
    pub fallback: bool,
    pub demand: TaskNode,
    pub preds: Vec<PredPlacement>,
    pub out_degree: usize,
    pub depth: usize,
    pub max_depth: usize,
    /// Unscheduled tasks of this app, this one included.
    pub remaining_tasks: usize,
    pub total_tasks: usize,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    /// Processing-only critical path from this task to a sink, fastest resource.
    pub remaining_critical_ms: f64,
}

/// Reward credited to an earlier decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Credit {
    pub decision: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub decision: usize,
    pub dense_reward: f64,
    pub delta_energy_j: f64,
    pub credits: Vec<Credit>,
    pub done: bool,
}

#[derive(Clone, Debug, Default)]
struct ResourceState {
    mem_used: f64,
    storage_used: f64,
    energy_used: f64,
    busy_done_ms: f64,
    in_transit: usize,
    in_transit_ms: f64,
    fifo: FifoQueue,
}

#[derive(Clone, Debug)]
struct AppInfo {
    preds: Vec<Vec<(usize, f64)>>,
    succs: Vec<Vec<usize>>,
    depth: Vec<usize>,
    max_depth: usize,
    bottom: Vec<f64>,
}

impl AppInfo {
    fn new(app: &DagApp, fastest_ghz: f64) -> Self {
        let n = app.tasks.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for e in &app.edges {
            preds[e.to].push((e.from, e.data_mb));
            succs[e.from].push(e.to);
        }
        let depth = app.depths();
        AppInfo {
            max_depth: depth.iter().copied().max().unwrap_or(0),
            depth,
            preds,
            succs,
            bottom: app.bottom_levels(fastest_ghz),
        }
    }
}

/// The application batch of training episode `episode` for a silo.
pub fn episode_apps(silo: &Silo, count: usize, seed: u64, stream_tag: u64, episode: u64) -> Vec<DagApp> {
    let index = ((silo.id as u64) << 32) | (episode & 0xFFFF_FFFF);
    generate_batch(
        &silo.profile,
        count,
        silo.fastest_ghz(),
        &mut seeding::stream(seed, stream_tag, index),
    )
}

pub struct SiloEnv {
    silo: Arc<Silo>,
    cfg: EnvConfig,
    seed: u64,
    episode: u64,
    norm: Normalizer,
    network: Arc<Vec<Vec<f64>>>,
    apps: Vec<DagApp>,
    info: Vec<AppInfo>,
    host: Vec<Vec<Option<usize>>>,
    waiting_preds: Vec<Vec<usize>>,
    completed: Vec<usize>,
    scheduled: Vec<usize>,
    last_decision: Vec<usize>,
    arrived: usize,
    apps_done: usize,
    res: Vec<ResourceState>,
    queue: BinaryHeap<Reverse<Event>>,
    now: f64,
    pending: Option<PendingDecision>,
    decisions: usize,
    total_tasks: usize,
    ledger: EpisodeLedger,
    rewarded: f64,
    log: Vec<EventRecord>,
    done: bool,
    cost: Option<CostBreakdown>,
}

impl SiloEnv {
    pub fn new(silo: Arc<Silo>, cfg: EnvConfig, seed: u64) -> Result<Self> {
        silo.validate()?;
        cfg.objective.validate()?;
        if cfg.apps_per_episode == 0 {
            return Err(Error::config("workload.apps_per_episode", "must be at least 1"));
        }
        let n = silo.resources.len();
        let network = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if a == b {
                            let others: Vec<f64> =
                                (0..n).filter(|&c| c != a).map(|c| silo.bandwidth_mbps[a][c]).collect();
                            crate::numerics::mean(&others)
                        } else {
                            silo.rtt_ms[a][b]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(SiloEnv {
            silo,
            cfg,
            seed,
            episode: 0,
            norm: Normalizer::default(),
            network: Arc::new(network),
            apps: Vec::new(),
            info: Vec::new(),
            host: Vec::new(),
            waiting_preds: Vec::new(),
            completed: Vec::new(),
            scheduled: Vec::new(),
            last_decision: Vec::new(),
            arrived: 0,
            apps_done: 0,
            res: Vec::new(),
            queue: BinaryHeap::new(),
            now: 0.0,
            pending: None,
            decisions: 0,
            total_tasks: 0,
            ledger: EpisodeLedger::default(),
            rewarded: 0.0,
            log: Vec::new(),
            done: true,
            cost: None,
        })
    }

    pub fn silo(&self) -> &Arc<Silo> {
        &self.silo
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    pub fn set_normalizer(&mut self, norm: Normalizer) {
        self.norm = norm;
    }

    pub fn set_record_events(&mut self, on: bool) {
        self.cfg.record_events = on;
    }

    /// Starts the next training episode from the silo's workload stream.
    pub fn reset(&mut self) -> Result<()> {
        let apps = episode_apps(&self.silo, self.cfg.apps_per_episode, self.seed, tag::WORKLOAD, self.episode);
        self.episode += 1;
        self.reset_with_apps(apps)
    }

    /// Starts an episode over a fixed application list. App ids must be
    /// positional.
    pub fn reset_with_apps(&mut self, apps: Vec<DagApp>) -> Result<()> {
        if apps.is_empty() {
            return Err(Error::EmptyInput("episode applications"));
        }
        for (i, app) in apps.iter().enumerate() {
            if app.id != i {
                return Err(Error::Environment(format!("app at position {i} has id {}", app.id)));
            }
            app.validate()?;
        }
        let fastest = self.silo.fastest_ghz();
        self.info = apps.iter().map(|a| AppInfo::new(a, fastest)).collect();
        self.host = apps.iter().map(|a| vec![None; a.tasks.len()]).collect();
        self.waiting_preds = self.info.iter().map(|i| i.preds.iter().map(Vec::len).collect()).collect();
        self.completed = vec![0; apps.len()];
        self.scheduled = vec![0; apps.len()];
        self.last_decision = vec![usize::MAX; apps.len()];
        self.arrived = 0;
        self.apps_done = 0;
        self.res = vec![ResourceState::default(); self.silo.resources.len()];
        self.queue.clear();
        self.now = 0.0;
        self.pending = None;
        self.decisions = 0;
        self.total_tasks = apps.iter().map(|a| a.tasks.len()).sum();
        self.ledger = EpisodeLedger {
            normalizer: self.norm.clone(),
            ..EpisodeLedger::default()
        };
        self.rewarded = 0.0;
        self.log.clear();
        self.done = false;
        self.cost = None;
        for app in &apps {
            self.queue.push(Reverse(Event {
                time: app.arrival_ms,
                kind: EventKind::AppArrival,
                app: app.id,
                task: 0,
                resource: 0,
            }));
        }
        self.apps = apps;
        let mut credits = Vec::new();
        self.advance(&mut credits)?;
        if self.pending.is_none() {
            return Err(Error::Environment("episode produced no decision".into()));
        }
        Ok(())
    }

    pub fn apps(&self) -> &[DagApp] {
        &self.apps
    }

    pub fn pending(&self) -> Option<&PendingDecision> {
        self.pending.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn now_ms(&self) -> f64 {
        self.now
    }

    pub fn total_tasks(&self) -> usize {
        self.total_tasks
    }

    pub fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    /// Cost of the finished episode.
    pub fn cost(&self) -> Option<&CostBreakdown> {
        self.cost.as_ref()
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn host_of(&self, app: usize, task: usize) -> Option<usize> {
        self.host.get(app)?.get(task).copied().flatten()
    }

    pub fn observe(&self) -> ObservedState {
        let utilization = self
            .silo
            .resources
            .iter()
            .zip(&self.res)
            .map(|(r, st)| Utilization {
                cpu: (self.backlog(st) / BACKLOG_HORIZON_MS).clamp(0.0, 1.0),
                memory: (st.mem_used / r.mem_mb()).clamp(0.0, 1.0),
                storage: (st.storage_used / r.storage_mb()).clamp(0.0, 1.0),
                energy: r
                    .energy_j
                    .map_or(0.0, |b| ((st.energy_used + self.idle_so_far(r.id)) / b.max(1e-9)).clamp(0.0, 1.0)),
            })
            .collect();
        ObservedState {
            now_ms: self.now,
            utilization,
            queue_len: self.res.iter().map(|st| st.fifo.len() + st.in_transit).collect(),
            backlog_ms: self.res.iter().map(|st| self.backlog(st)).collect(),
            network: Arc::clone(&self.network),
            pending_apps: self.arrived - self.apps_done,
            pending_tasks: self
                .apps
                .iter()
                .zip(&self.scheduled)
                .filter(|(a, _)| a.arrival_ms <= self.now)
                .map(|(a, s)| a.tasks.len() - s)
                .sum(),
        }
    }

    fn backlog(&self, st: &ResourceState) -> f64 {
        st.fifo.backlog(self.now) + st.in_transit_ms
    }

    fn idle_so_far(&self, n: usize) -> f64 {
        let st = &self.res[n];
        let running = st.fifo.running().map_or(0.0, |r| self.now - r.start_ms);
        (self.now - st.busy_done_ms - running).max(0.0)
    }

    /// Remaining battery of resource `n` after idle draw so far; infinite on mains.
    pub fn energy_headroom(&self, n: usize) -> f64 {
        let r = &self.silo.resources[n];
        r.energy_j.map_or(f64::INFINITY, |b| {
            b - self.res[n].energy_used - r.p_standby * self.idle_so_far(n) / 1000.0
        })
    }

    fn feasible(&self, task: &TaskNode, preds: &[PredPlacement], n: usize) -> bool {
        let r = &self.silo.resources[n];
        let st = &self.res[n];
        if st.mem_used + task.m_req > r.mem_mb() || st.storage_used + task.d_req > r.storage_mb() {
            return false;
        }
        let mut draw = r.p_comp * proc_time_ms(task, r) / 1000.0;
        let mut sends: Vec<(usize, f64)> = Vec::new();
        for p in preds.iter().filter(|p| p.host != n) {
            let c = comm_time_ms(p.data_mb, p.host, n, &self.silo);
            draw += r.p_recv * c / 1000.0;
            let s = self.silo.resources[p.host].p_send * c / 1000.0;
            match sends.iter_mut().find(|(h, _)| *h == p.host) {
                Some(entry) => entry.1 += s,
                None => sends.push((p.host, s)),
            }
        }
        if draw > self.energy_headroom(n) {
            return false;
        }
        sends.iter().all(|(h, s)| *s <= self.energy_headroom(*h))
    }

    fn make_decision(&self, app: usize, task: usize) -> PendingDecision {
        let a = &self.apps[app];
        let info = &self.info[app];
        let preds: Vec<PredPlacement> = info.preds[task]
            .iter()
            .map(|&(p, data_mb)| PredPlacement {
                host: self.host[app][p].expect("predecessor placed before its successor is ready"),
                data_mb,
            })
            .collect();
        let demand = a.tasks[task].clone();
        let n = self.silo.resources.len();
        let mut feasible: Vec<bool> = (0..n).map(|r| self.feasible(&demand, &preds, r)).collect();
        let fallback = !feasible.iter().any(|f| *f);
        if fallback {
            let pick = (0..n)
                .max_by(|&x, &y| {
                    let key = |r: usize| {
                        (
                            self.energy_headroom(r),
                            self.silo.resources[r].mem_mb() - self.res[r].mem_used,
                        )
                    };
                    let (kx, ky) = (key(x), key(y));
                    kx.0.total_cmp(&ky.0)
                        .then(kx.1.total_cmp(&ky.1))
                        .then(y.cmp(&x))
                })
                .expect("silo has resources");
            feasible[pick] = true;
            log::debug!("silo {} app {app} task {task}: empty feasible set, fallback to {pick}", self.silo.id);
        }
        PendingDecision {
            app,
            task,
            ready_ms: self.now,
            feasible,
            fallback,
            demand,
            preds,
            out_degree: info.succs[task].len(),
            depth: info.depth[task],
            max_depth: info.max_depth,
            remaining_tasks: a.tasks.len() - self.scheduled[app],
            total_tasks: a.tasks.len(),
            arrival_ms: a.arrival_ms,
            deadline_ms: a.deadline_ms,
            remaining_critical_ms: info.bottom[task],
        }
    }

    fn record(&mut self, event: LogEvent, app: usize, task: Option<usize>, resource: Option<usize>) {
        if self.cfg.record_events {
            self.log.push(EventRecord {
                timestamp: self.now,
                event,
                app,
                task,
                resource,
            });
        }
    }

    fn push(&mut self, time: f64, kind: EventKind, app: usize, task: usize, resource: usize) {
        self.queue.push(Reverse(Event {
            time,
            kind,
            app,
            task,
            resource,
        }));
    }

    fn try_start(&mut self, n: usize) {
        if let Some(run) = self.res[n].fifo.start_next(self.now) {
            self.record(LogEvent::TaskStart, run.app, Some(run.task), Some(n));
            self.push(run.finish_ms, EventKind::TaskComplete, run.app, run.task, n);
        }
    }

    /// Places the pending task on `action` and runs the simulation to the
    /// next decision point or the end of the episode.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let pd = self
            .pending
            .take()
            .ok_or_else(|| Error::Environment("step called with no pending decision".into()))?;
        if !pd.feasible.get(action).copied().unwrap_or(false) {
            let err = Error::InfeasibleAction {
                app: pd.app,
                task: pd.task,
                resource: action,
            };
            self.pending = Some(pd);
            return Err(err);
        }
        let delta = self.assign(&pd, action);
        let decision = self.decisions;
        self.decisions += 1;
        self.ledger.decision_energy_j.push(delta);
        if self.scheduled[pd.app] == self.apps[pd.app].tasks.len() {
            self.last_decision[pd.app] = decision;
        }
        let dense = dense_energy_reward(delta, self.total_tasks, &self.norm, &self.cfg.objective);
        self.rewarded += dense;
        let mut credits = Vec::new();
        self.advance(&mut credits)?;
        if self.pending.is_none() {
            self.finish_episode(&mut credits)?;
        }
        Ok(StepOutcome {
            decision,
            dense_reward: dense,
            delta_energy_j: delta,
            credits,
            done: self.done,
        })
    }

    fn assign(&mut self, pd: &PendingDecision, n: usize) -> f64 {
        let r = &self.silo.resources[n];
        let proc = proc_time_ms(&pd.demand, r);
        let comp = r.p_comp * proc / 1000.0;
        let mut delta = comp;
        self.res[n].energy_used += comp;
        let mut max_comm: f64 = 0.0;
        for p in &pd.preds {
            if p.host == n {
                continue;
            }
            let c = comm_time_ms(p.data_mb, p.host, n, &self.silo);
            let send = self.silo.resources[p.host].p_send * c / 1000.0;
            let recv = r.p_recv * c / 1000.0;
            delta += send + recv;
            self.res[p.host].energy_used += send;
            self.res[n].energy_used += recv;
            max_comm = max_comm.max(c);
        }
        self.host[pd.app][pd.task] = Some(n);
        self.scheduled[pd.app] += 1;
        let st = &mut self.res[n];
        st.mem_used += pd.demand.m_req;
        st.storage_used += pd.demand.d_req;
        st.in_transit += 1;
        st.in_transit_ms += proc;
        self.record(LogEvent::Assign, pd.app, Some(pd.task), Some(n));
        self.push(self.now + max_comm, EventKind::TransferComplete, pd.app, pd.task, n);
        delta
    }

    fn advance(&mut self, credits: &mut Vec<Credit>) -> Result<()> {
        while self.pending.is_none() {
            let Some(Reverse(ev)) = self.queue.pop() else {
                break;
            };
            if ev.time < self.now {
                return Err(Error::Environment("simulated clock moved backwards".into()));
            }
            self.now = ev.time;
            match ev.kind {
                EventKind::AppArrival => {
                    self.arrived += 1;
                    self.record(LogEvent::AppArrival, ev.app, None, None);
                    for s in self.apps[ev.app].sources() {
                        self.push(self.now, EventKind::TaskReady, ev.app, s, 0);
                    }
                }
                EventKind::TaskReady => {
                    self.record(LogEvent::TaskReady, ev.app, Some(ev.task), None);
                    self.pending = Some(self.make_decision(ev.app, ev.task));
                }
                EventKind::TransferComplete => {
                    let n = ev.resource;
                    let proc = proc_time_ms(&self.apps[ev.app].tasks[ev.task], &self.silo.resources[n]);
                    self.record(LogEvent::TransferComplete, ev.app, Some(ev.task), Some(n));
                    let st = &mut self.res[n];
                    st.in_transit -= 1;
                    st.in_transit_ms = if st.in_transit == 0 { 0.0 } else { (st.in_transit_ms - proc).max(0.0) };
                    st.fifo.push(QueuedTask {
                        arrival_ms: self.now,
                        app: ev.app,
                        task: ev.task,
                        proc_ms: proc,
                    });
                    self.try_start(n);
                }
                EventKind::TaskComplete => self.complete_task(ev, credits),
            }
        }
        Ok(())
    }

    fn complete_task(&mut self, ev: Event, credits: &mut Vec<Credit>) {
        let n = ev.resource;
        let task = &self.apps[ev.app].tasks[ev.task];
        let (m, d) = (task.m_req, task.d_req);
        let st = &mut self.res[n];
        if let Some(run) = st.fifo.finish() {
            st.busy_done_ms += run.finish_ms - run.start_ms;
        }
        st.mem_used = (st.mem_used - m).max(0.0);
        st.storage_used = (st.storage_used - d).max(0.0);
        self.record(LogEvent::TaskComplete, ev.app, Some(ev.task), Some(n));
        self.completed[ev.app] += 1;
        for i in 0..self.info[ev.app].succs[ev.task].len() {
            let s = self.info[ev.app].succs[ev.task][i];
            self.waiting_preds[ev.app][s] -= 1;
            if self.waiting_preds[ev.app][s] == 0 {
                self.push(self.now, EventKind::TaskReady, ev.app, s, 0);
            }
        }
        if self.completed[ev.app] == self.apps[ev.app].tasks.len() {
            self.complete_app(ev.app, credits);
        }
        self.try_start(n);
    }

    fn complete_app(&mut self, app: usize, credits: &mut Vec<Credit>) {
        self.apps_done += 1;
        let a = &self.apps[app];
        let response = self.now - a.arrival_ms;
        let violated = response > a.deadline_ms;
        self.ledger.response_ms.push(response);
        self.ledger.violated.push(violated);
        let obj = &self.cfg.objective;
        let share = obj.lambda_rt * app_cost_share(response, self.apps.len(), &self.norm, obj);
        self.rewarded -= share;
        credits.push(Credit {
            decision: self.last_decision[app],
            reward: terminal_reward(share, violated, obj.deadline_penalty),
        });
        self.record(LogEvent::AppComplete, app, None, None);
    }

    fn finish_episode(&mut self, credits: &mut Vec<Credit>) -> Result<()> {
        if self.apps_done != self.apps.len() {
            return Err(Error::Environment("event queue drained before all apps completed".into()));
        }
        let end = self.now;
        self.ledger.idle_energy_j = self
            .silo
            .resources
            .iter()
            .zip(&self.res)
            .map(|(r, st)| r.p_standby * (end - st.busy_done_ms) / 1000.0)
            .sum();
        let cost = silo_cost(&self.ledger, &self.cfg.objective)?;
        credits.push(Credit {
            decision: self.decisions - 1,
            reward: -cost.total - self.rewarded,
        });
        self.norm.eta_ref = cost.eta_ms;
        self.cost = Some(cost);
        self.done = true;
        Ok(())
    }
}

/// Runs uniform-random episodes on a dedicated workload stream until at least
/// `min_decisions` decisions were made, then freezes the extrema.
pub fn calibrate_normalizer(env: &mut SiloEnv, min_decisions: usize, seed: u64) -> Result<Normalizer> {
    let mut rng = seeding::stream(seed, tag::WARMUP, env.silo.id as u64);
    let (mut rts, mut energies, mut etas) = (Vec::new(), Vec::new(), Vec::new());
    let mut decisions = 0;
    let mut episode = 0;
    while decisions < min_decisions.max(1) {
        let apps = episode_apps(&env.silo, env.cfg.apps_per_episode, seed, tag::WARMUP, episode);
        episode += 1;
        env.reset_with_apps(apps)?;
        while let Some(pd) = env.pending() {
            let options: Vec<usize> = (0..pd.feasible.len()).filter(|&i| pd.feasible[i]).collect();
            let pick = options[rng.random_range(0..options.len())];
            env.step(pick)?;
        }
        let ledger = env.ledger();
        let n = ledger.decision_energy_j.len();
        let idle_share = ledger.idle_energy_j / n as f64;
        rts.extend_from_slice(&ledger.response_ms);
        energies.extend(ledger.decision_energy_j.iter().map(|e| e + idle_share));
        etas.push(env.cost().map_or(0.0, |c| c.eta_ms));
        decisions += n;
    }
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = Normalizer {
        rt_min: lo(&rts),
        rt_max: hi(&rts),
        energy_min: lo(&energies),
        energy_max: hi(&energies),
        eta_ref: crate::numerics::mean(&etas),
    };
    env.set_normalizer(norm.clone());
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::{Resource, Tier};
    use crate::workload::{Edge, ProfileKind, WorkloadProfile};

    fn resource(id: usize, freq_ghz: f64, mem_gb: f64, energy_j: Option<f64>) -> Resource {
        Resource {
            id,
            tier: if energy_j.is_some() { Tier::Iot } else { Tier::Edge },
            freq_ghz,
            mem_gb,
            storage_gb: 64.0,
            energy_j,
            p_comp: 10.0,
            p_send: 1.5,
            p_recv: 1.0,
            p_standby: 0.5,
        }
    }

    fn silo(resources: Vec<Resource>) -> Arc<Silo> {
        let n = resources.len();
        let bw = (0..n).map(|a| (0..n).map(|b| if a == b { 1000.0 } else { 20.0 }).collect()).collect();
        let rtt = (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { 10.0 }).collect()).collect();
        Arc::new(Silo {
            id: 0,
            resources,
            bandwidth_mbps: bw,
            rtt_ms: rtt,
            profile: WorkloadProfile::preset(ProfileKind::Balanced),
        })
    }

    fn task(id: usize, f_req: f64, m_req: f64) -> TaskNode {
        TaskNode {
            id,
            f_req,
            m_req,
            d_req: 10.0,
        }
    }

    fn env(s: Arc<Silo>) -> SiloEnv {
        let cfg = EnvConfig {
            record_events: true,
            ..EnvConfig::default()
        };
        SiloEnv::new(s, cfg, 1).unwrap()
    }

    #[test]
    fn single_task_response_is_processing_time() {
        let mut e = env(silo(vec![resource(0, 1.0, 4.0, None), resource(1, 2.0, 4.0, None)]));
        let app = DagApp::new(0, vec![task(0, 1000.0, 64.0)], vec![], 5000.0, 0.0).unwrap();
        e.reset_with_apps(vec![app]).unwrap();
        let out = e.step(1).unwrap();
        assert!(out.done);
        assert_eq!(e.ledger().response_ms, vec![500.0]);
        // Compute only: 10 W for 0.5 s; no transfer energy.
        assert_eq!(out.delta_energy_j, 5.0);
    }

    #[test]
    fn split_chain_pays_transfer() {
        let mut e = env(silo(vec![resource(0, 1.0, 4.0, None), resource(1, 1.0, 4.0, None)]));
        let app = DagApp::new(
            0,
            vec![task(0, 1000.0, 64.0), task(1, 1000.0, 64.0)],
            vec![Edge {
                from: 0,
                to: 1,
                data_mb: 10.0,
            }],
            50_000.0,
            0.0,
        )
        .unwrap();
        e.reset_with_apps(vec![app.clone()]).unwrap();
        e.step(0).unwrap();
        e.step(1).unwrap();
        assert_eq!(e.ledger().response_ms, vec![1000.0 + 510.0 + 1000.0]);
        e.reset_with_apps(vec![app]).unwrap();
        e.step(0).unwrap();
        e.step(0).unwrap();
        assert_eq!(e.ledger().response_ms, vec![2000.0]);
    }

    #[test]
    fn deadline_penalty_applied_once_per_app() {
        let mut e = env(silo(vec![resource(0, 1.0, 4.0, None)]));
        let apps = vec![
            DagApp::new(0, vec![task(0, 1000.0, 64.0), task(1, 500.0, 64.0)], vec![Edge { from: 0, to: 1, data_mb: 1.0 }], 100.0, 0.0).unwrap(),
            DagApp::new(1, vec![task(0, 100.0, 64.0)], vec![], 1e9, 0.0).unwrap(),
        ];
        e.reset_with_apps(apps).unwrap();
        let mut penalties = 0;
        let mut total = 0.0;
        while e.pending().is_some() {
            let out = e.step(0).unwrap();
            total += out.dense_reward;
            for c in &out.credits {
                total += c.reward;
                if c.reward <= -10.0 {
                    penalties += 1;
                }
            }
        }
        assert_eq!(penalties, 1);
        let cost = e.cost().unwrap();
        assert_eq!(cost.violations, 1);
        assert!((total - (-cost.total - 10.0)).abs() < 1e-9);
    }

    #[test]
    fn infeasible_action_is_an_error_and_keeps_decision() {
        let mut e = env(silo(vec![resource(0, 1.0, 1.0, None), resource(1, 1.0, 8.0, None)]));
        let app = DagApp::new(0, vec![task(0, 100.0, 4096.0)], vec![], 1000.0, 0.0).unwrap();
        e.reset_with_apps(vec![app]).unwrap();
        assert_eq!(e.pending().unwrap().feasible, vec![false, true]);
        assert!(matches!(e.step(0), Err(Error::InfeasibleAction { .. })));
        assert!(e.pending().is_some());
        assert!(e.step(1).unwrap().done);
        assert!(e.step(1).is_err());
    }

    #[test]
    fn exhausted_battery_is_masked_and_abundant_silo_is_open() {
        let mut e = env(silo(vec![
            resource(0, 1.0, 4.0, Some(0.0)),
            resource(1, 1.0, 4.0, None),
            resource(2, 1.0, 4.0, Some(50_000.0)),
        ]));
        let app = DagApp::new(0, vec![task(0, 100.0, 64.0)], vec![], 1000.0, 0.0).unwrap();
        e.reset_with_apps(vec![app]).unwrap();
        assert_eq!(e.pending().unwrap().feasible, vec![false, true, true]);
        assert!(!e.pending().unwrap().fallback);
    }

    #[test]
    fn all_infeasible_falls_back_to_most_headroom() {
        let mut e = env(silo(vec![resource(0, 1.0, 1.0, None), resource(1, 1.0, 2.0, None)]));
        let app = DagApp::new(0, vec![task(0, 100.0, 8192.0)], vec![], 1000.0, 0.0).unwrap();
        e.reset_with_apps(vec![app]).unwrap();
        let pd = e.pending().unwrap();
        assert!(pd.fallback);
        assert_eq!(pd.feasible, vec![false, true]);
    }

    #[test]
    fn episode_rewards_sum_to_negative_cost() {
        let fleet = crate::infra::build_fleet(4, 3).unwrap();
        for s in fleet.silos {
            let mut e = SiloEnv::new(Arc::new(s), EnvConfig::default(), 5).unwrap();
            calibrate_normalizer(&mut e, 200, 5).unwrap();
            e.reset().unwrap();
            let mut sum = 0.0;
            let mut k = 0;
            while let Some(pd) = e.pending() {
                let a = (0..pd.feasible.len()).filter(|&i| pd.feasible[i]).nth(k % 2).unwrap_or_else(|| pd.feasible.iter().position(|f| *f).unwrap());
                k += 1;
                let out = e.step(a).unwrap();
                sum += out.dense_reward + out.credits.iter().map(|c| c.reward).sum::<f64>();
            }
            let c = e.cost().unwrap();
            let expected = -c.total - 10.0 * c.violations as f64;
            assert!((sum - expected).abs() < 1e-9, "{sum} vs {expected}");
            assert!((0.0..=1.0).contains(&c.rt_norm) && (0.0..=1.0).contains(&c.energy_norm));
            assert_eq!(c.decisions, e.total_tasks());
        }
    }

    #[test]
    fn generated_episodes_satisfy_invariants() {
        let fleet = crate::infra::build_fleet(4, 8).unwrap();
        for s in fleet.silos {
            let s = Arc::new(s);
            let mut e = env(Arc::clone(&s));
            let mut rng = seeding::stream(1, 0, s.id as u64);
            for _ in 0..3 {
                e.reset().unwrap();
                while let Some(pd) = e.pending() {
                    let opts: Vec<usize> = (0..pd.feasible.len()).filter(|&i| pd.feasible[i]).collect();
                    e.step(opts[rng.random_range(0..opts.len())]).unwrap();
                }
                let v = crate::simenv::check_episode(e.event_log(), e.apps(), &s);
                assert!(v.is_empty(), "{v:?}");
            }
        }
    }

    #[test]
    fn observation_fractions_in_range() {
        let fleet = crate::infra::build_fleet(4, 2).unwrap();
        let s = Arc::new(fleet.silos[3].clone());
        let mut e = env(s);
        e.reset().unwrap();
        let o = e.observe();
        assert!(o.queue_len.iter().all(|q| *q == 0));
        while e.pending().is_some() {
            let o = e.observe();
            for u in &o.utilization {
                for v in [u.cpu, u.memory, u.storage, u.energy] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
            let a = e.pending().unwrap().feasible.iter().position(|f| *f).unwrap();
            e.step(a).unwrap();
        }
    }
}
