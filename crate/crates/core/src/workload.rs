//! Synthetic DAG applications with silo-profile-dependent (Non-IID) statistics.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest application `app_paths` will enumerate.
pub const PATH_ENUMERATION_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: usize,
    /// Required CPU, megacycles.
    pub f_req: f64,
    /// Required memory, MB.
    pub m_req: f64,
    /// Required storage, MB.
    pub d_req: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub data_mb: f64,
}

/// A validated DAG application. Construct through [`DagApp::new`] or
/// deserialize through [`read_apps_jsonl`]; both run the cycle check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagApp {
    pub id: usize,
    pub tasks: Vec<TaskNode>,
    pub edges: Vec<Edge>,
    pub deadline_ms: f64,
    pub arrival_ms: f64,
}

impl DagApp {
    pub fn new(
        id: usize,
        tasks: Vec<TaskNode>,
        edges: Vec<Edge>,
        deadline_ms: f64,
        arrival_ms: f64,
    ) -> Result<Self> {
        let app = DagApp {
            id,
            tasks,
            edges,
            deadline_ms,
            arrival_ms,
        };
        app.validate()?;
        Ok(app)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tasks.len();
        if n == 0 {
            return Err(Error::InvalidDag("no tasks".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.id != i {
                return Err(Error::InvalidDag(format!("task at position {i} has id {}", t.id)));
            }
            if !(t.f_req > 0.0 && t.m_req > 0.0 && t.d_req > 0.0) {
                return Err(Error::InvalidDag(format!("task {i} has a non-positive demand")));
            }
        }
        for e in &self.edges {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(Error::InvalidDag(format!("bad edge {} -> {}", e.from, e.to)));
            }
            if !(e.data_mb > 0.0) {
                return Err(Error::InvalidDag(format!(
                    "edge {} -> {} carries no data",
                    e.from, e.to
                )));
            }
        }
        if !(self.deadline_ms > 0.0) || !self.arrival_ms.is_finite() || self.arrival_ms < 0.0 {
            return Err(Error::InvalidDag("deadline must be positive, arrival non-negative".into()));
        }
        topological_order(self).map(|_| ())
    }

    pub fn predecessors(&self, task: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == task)
    }

    pub fn successors(&self, task: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == task)
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&t| self.predecessors(t).next().is_none())
            .collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&t| self.successors(t).next().is_none())
            .collect()
    }

    /// Longest processing-only path from each task to a sink, at `ghz`.
    pub fn bottom_levels(&self, ghz: f64) -> Vec<f64> {
        let order = topological_order(self).expect("validated app");
        let mut level = vec![0.0; self.tasks.len()];
        for &t in order.iter().rev() {
            let own = self.tasks[t].f_req / ghz;
            let tail = self
                .successors(t)
                .map(|e| level[e.to])
                .fold(0.0, f64::max);
            level[t] = own + tail;
        }
        level
    }

    /// Depth of each task: number of edges on the longest path from a source.
    pub fn depths(&self) -> Vec<usize> {
        let order = topological_order(self).expect("validated app");
        let mut depth = vec![0usize; self.tasks.len()];
        for &t in &order {
            for e in self.successors(t) {
                depth[e.to] = depth[e.to].max(depth[t] + 1);
            }
        }
        depth
    }

    /// Critical-path lower bound: processing only, every task at `ghz`.
    pub fn critical_path_lower_bound(&self, ghz: f64) -> f64 {
        self.bottom_levels(ghz).into_iter().fold(0.0, f64::max)
    }
}

/// Kahn's algorithm; ties resolved by smallest task id.
pub fn topological_order(app: &DagApp) -> Result<Vec<usize>> {
    let n = app.tasks.len();
    let mut indeg = vec![0usize; n];
    for e in &app.edges {
        indeg[e.to] += 1;
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&t| indeg[t] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(t) = ready.pop_first() {
        order.push(t);
        for e in app.edges.iter().filter(|e| e.from == t) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                ready.insert(e.to);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidDag(format!("cycle in app {}", app.id)));
    }
    Ok(order)
}

/// Every source-to-sink path. Oracle use only; refuses apps above the cap.
pub fn app_paths(app: &DagApp) -> Result<Vec<Vec<usize>>> {
    if app.tasks.len() > PATH_ENUMERATION_CAP {
        return Err(Error::SizeCap(format!(
            "{} tasks exceed the path enumeration cap of {PATH_ENUMERATION_CAP}",
            app.tasks.len()
        )));
    }
    let mut paths = Vec::new();
    let mut stack: Vec<Vec<usize>> = app.sources().into_iter().rev().map(|s| vec![s]).collect();
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty path");
        let succ: Vec<usize> = app.successors(last).map(|e| e.to).collect();
        if succ.is_empty() {
            paths.push(path);
            continue;
        }
        for &s in succ.iter().rev() {
            let mut next = path.clone();
            next.push(s);
            stack.push(next);
        }
    }
    Ok(paths)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    CloudDominant,
    EdgeDominant,
    Balanced,
    IotDense,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::CloudDominant,
        ProfileKind::EdgeDominant,
        ProfileKind::Balanced,
        ProfileKind::IotDense,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub kind: ProfileKind,
    pub task_count: (usize, usize),
    /// Megacycles per task.
    pub cpu_mcycles: (f64, f64),
    pub mem_mb: (f64, f64),
    pub storage_mb: (f64, f64),
    pub data_mb: (f64, f64),
    /// Deadline as a multiple of the ideal critical-path time.
    pub deadline_tightness: f64,
    /// Applications per simulated second.
    pub arrival_rate: f64,
}

impl WorkloadProfile {
    pub fn preset(kind: ProfileKind) -> Self {
        let (task_count, cpu_mcycles, data_mb, deadline_tightness, arrival_rate) = match kind {
            ProfileKind::CloudDominant => ((3, 8), (800.0, 4000.0), (1.0, 20.0), 3.0, 0.3),
            ProfileKind::EdgeDominant => ((3, 8), (100.0, 800.0), (0.2, 5.0), 3.0, 0.8),
            ProfileKind::Balanced => ((3, 8), (100.0, 4000.0), (0.5, 10.0), 3.0, 0.4),
            ProfileKind::IotDense => ((2, 6), (50.0, 400.0), (0.05, 1.0), 3.0, 0.8),
        };
        WorkloadProfile {
            kind,
            task_count,
            cpu_mcycles,
            mem_mb: (32.0, 512.0),
            storage_mb: (10.0, 500.0),
            data_mb,
            deadline_tightness,
            arrival_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |name: &str| format!("workload.{name}");
        if self.task_count.0 == 0 || self.task_count.0 > self.task_count.1 {
            return Err(Error::config(p("task_count"), "need 1 <= lo <= hi"));
        }
        for (name, (lo, hi)) in [
            ("cpu_mcycles", self.cpu_mcycles),
            ("mem_mb", self.mem_mb),
            ("storage_mb", self.storage_mb),
            ("data_mb", self.data_mb),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(p(name), "need 0 < lo <= hi"));
            }
        }
        if !(self.deadline_tightness > 1.0 && self.deadline_tightness.is_finite()) {
            return Err(Error::config(p("deadline_tightness"), "must exceed 1"));
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::config(p("arrival_rate"), "must be positive"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Layered random DAG. Task ids are assigned layer by layer, so every edge
/// points from a lower id to a higher one. The deadline is the profile
/// tightness times the processing-only critical path at `fastest_ghz`.
pub fn generate_app<R: Rng + ?Sized>(
    profile: &WorkloadProfile,
    id: usize,
    arrival_ms: f64,
    fastest_ghz: f64,
    rng: &mut R,
) -> DagApp {
    let n = rng.random_range(profile.task_count.0..=profile.task_count.1);
    let layer_count = rng.random_range(2..=5usize).min(n);
    let mut widths = vec![1usize; layer_count];
    for _ in layer_count..n {
        let l = rng.random_range(0..layer_count);
        widths[l] += 1;
    }
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(layer_count);
    let mut next = 0;
    for w in widths {
        layers.push((next..next + w).collect());
        next += w;
    }
    let tasks: Vec<TaskNode> = (0..n)
        .map(|i| TaskNode {
            id: i,
            f_req: uniform(rng, profile.cpu_mcycles),
            m_req: uniform(rng, profile.mem_mb),
            d_req: uniform(rng, profile.storage_mb),
        })
        .collect();
    let mut edges = Vec::new();
    for k in 1..layers.len() {
        let prev = &layers[k - 1];
        for &v in &layers[k] {
            let parent = prev[rng.random_range(0..prev.len())];
            for layer in &layers[..k] {
                for &u in layer {
                    if u == parent || rng.random_bool(0.2) {
                        edges.push(Edge {
                            from: u,
                            to: v,
                            data_mb: uniform(rng, profile.data_mb),
                        });
                    }
                }
            }
        }
    }
    let mut app = DagApp {
        id,
        tasks,
        edges,
        deadline_ms: 1.0,
        arrival_ms,
    };
    app.deadline_ms = profile.deadline_tightness * app.critical_path_lower_bound(fastest_ghz);
    debug_assert!(app.validate().is_ok());
    app
}

/// A batch of apps with Poisson arrivals; the first arrives at t = 0.
pub fn generate_batch<R: Rng + ?Sized>(
    profile: &WorkloadProfile,
    count: usize,
    fastest_ghz: f64,
    rng: &mut R,
) -> Vec<DagApp> {
    let gap = Exp::new(profile.arrival_rate).expect("validated rate");
    let mut t = 0.0;
    (0..count)
        .map(|id| {
            if id > 0 {
                t += gap.sample(rng) * 1000.0;
            }
            generate_app(profile, id, t, fastest_ghz, rng)
        })
        .collect()
}

/// One JSON object per line.
pub fn write_apps_jsonl<W: Write>(apps: &[DagApp], mut out: W) -> Result<()> {
    for app in apps {
        let line = serde_json::to_string(app).map_err(|e| Error::Environment(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_apps_jsonl<R: BufRead>(input: R) -> Result<Vec<DagApp>> {
    let mut apps = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let app: DagApp = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        app.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        apps.push(app);
    }
    Ok(apps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    fn task(id: usize) -> TaskNode {
        TaskNode {
            id,
            f_req: 100.0,
            m_req: 64.0,
            d_req: 10.0,
        }
    }

    fn edge(from: usize, to: usize) -> Edge {
        Edge {
            from,
            to,
            data_mb: 1.0,
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let r = DagApp::new(0, vec![task(0), task(1)], vec![edge(0, 1), edge(1, 0)], 10.0, 0.0);
        assert!(matches!(r, Err(Error::InvalidDag(_))));
    }

    #[test]
    fn zero_data_edge_is_rejected() {
        let mut e = edge(0, 1);
        e.data_mb = 0.0;
        assert!(DagApp::new(0, vec![task(0), task(1)], vec![e], 10.0, 0.0).is_err());
    }

    #[test]
    fn chain_and_diamond_paths() {
        let chain = DagApp::new(0, (0..3).map(task).collect(), vec![edge(0, 1), edge(1, 2)], 1.0, 0.0).unwrap();
        assert_eq!(app_paths(&chain).unwrap(), vec![vec![0, 1, 2]]);
        let diamond = DagApp::new(
            1,
            (0..4).map(task).collect(),
            vec![edge(0, 1), edge(0, 2), edge(1, 3), edge(2, 3)],
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(app_paths(&diamond).unwrap(), vec![vec![0, 1, 3], vec![0, 2, 3]]);
    }

    #[test]
    fn path_cap_enforced() {
        let tasks: Vec<TaskNode> = (0..21).map(task).collect();
        let edges: Vec<Edge> = (0..20).map(|i| edge(i, i + 1)).collect();
        let app = DagApp::new(0, tasks, edges, 1.0, 0.0).unwrap();
        assert!(matches!(app_paths(&app), Err(Error::SizeCap(_))));
    }

    #[test]
    fn single_task_profile() {
        let mut p = WorkloadProfile::preset(ProfileKind::Balanced);
        p.task_count = (1, 1);
        let app = generate_app(&p, 0, 0.0, 2.0, &mut stream(1, 2, 3));
        assert_eq!(app.tasks.len(), 1);
        assert!(app.edges.is_empty());
        let expected = p.deadline_tightness * app.tasks[0].f_req / 2.0;
        assert!((app.deadline_ms - expected).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = WorkloadProfile::preset(ProfileKind::CloudDominant);
        let a = generate_batch(&p, 5, 3.0, &mut stream(9, 2, 0));
        let b = generate_batch(&p, 5, 3.0, &mut stream(9, 2, 0));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn jsonl_roundtrip_and_line_numbers() {
        let p = WorkloadProfile::preset(ProfileKind::EdgeDominant);
        let apps = generate_batch(&p, 4, 2.0, &mut stream(2, 2, 0));
        let mut buf = Vec::new();
        write_apps_jsonl(&apps, &mut buf).unwrap();
        assert_eq!(read_apps_jsonl(buf.as_slice()).unwrap(), apps);
        let bad = b"{\"id\":0}\n";
        let mut text = buf.clone();
        text.extend_from_slice(bad);
        match read_apps_jsonl(text.as_slice()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn preset_profiles_validate() {
        for k in ProfileKind::ALL {
            WorkloadProfile::preset(k).validate().unwrap();
        }
    }
}
