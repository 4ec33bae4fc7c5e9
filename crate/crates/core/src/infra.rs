//! Silos, heterogeneous resources, intra-silo networks and inter-silo RTTs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, tag};
use crate::workload::{ProfileKind, WorkloadProfile};

/// Bandwidth reported for a resource talking to itself.
pub const LOOPBACK_BANDWIDTH_MBPS: f64 = 1000.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Iot,
    Edge,
    Cloud,
}

impl Tier {
    pub fn index(self) -> usize {
        match self {
            Tier::Iot => 0,
            Tier::Edge => 1,
            Tier::Cloud => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resource {
    pub id: usize,
    pub tier: Tier,
    pub freq_ghz: f64,
    pub mem_gb: f64,
    pub storage_gb: f64,
    /// Battery budget in joules; `None` means mains powered.
    pub energy_j: Option<f64>,
    pub p_comp: f64,
    pub p_send: f64,
    pub p_recv: f64,
    pub p_standby: f64,
}

impl Resource {
    pub fn mem_mb(&self) -> f64 {
        self.mem_gb * 1024.0
    }

    pub fn storage_mb(&self) -> f64 {
        self.storage_gb * 1024.0
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.freq_ghz > 0.0 && self.mem_gb > 0.0 && self.storage_gb > 0.0) {
            return Err(Error::config(path, "capacities must be positive"));
        }
        match (self.tier, self.energy_j) {
            (Tier::Iot, Some(e)) if !(e >= 0.0 && e.is_finite()) => {
                return Err(Error::config(path, "battery budget must be finite and >= 0"))
            }
            (Tier::Edge | Tier::Cloud, Some(_)) => {
                return Err(Error::config(path, "only IoT devices run on battery"))
            }
            _ => {}
        }
        if !(self.p_standby >= 0.0
            && self.p_standby < self.p_comp
            && self.p_send >= 0.0
            && self.p_recv >= 0.0)
        {
            return Err(Error::config(path, "power parameters out of order"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Silo {
    pub id: usize,
    pub resources: Vec<Resource>,
    /// MB/s, row-major `resources x resources`.
    pub bandwidth_mbps: Vec<Vec<f64>>,
    /// Milliseconds, row-major `resources x resources`.
    pub rtt_ms: Vec<Vec<f64>>,
    pub profile: WorkloadProfile,
}

impl Silo {
    pub fn fastest_ghz(&self) -> f64 {
        self.resources.iter().map(|r| r.freq_ghz).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.resources.len();
        let base = format!("silos[{}]", self.id);
        if n == 0 {
            return Err(Error::config(&base, "silo has no resources"));
        }
        for (i, r) in self.resources.iter().enumerate() {
            if r.id != i {
                return Err(Error::config(format!("{base}.resources[{i}].id"), "ids must be positional"));
            }
            r.validate(&format!("{base}.resources[{i}]"))?;
        }
        for (name, m) in [("bandwidth_mbps", &self.bandwidth_mbps), ("rtt_ms", &self.rtt_ms)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(Error::config(format!("{base}.{name}"), "matrix side must equal resource count"));
            }
        }
        for a in 0..n {
            if self.rtt_ms[a][a] != 0.0 {
                return Err(Error::config(format!("{base}.rtt_ms"), "diagonal must be zero"));
            }
            for b in 0..n {
                if !(self.bandwidth_mbps[a][b] > 0.0) || !(self.rtt_ms[a][b] >= 0.0) {
                    return Err(Error::config(
                        format!("{base}.bandwidth_mbps"),
                        "bandwidth must be positive and rtt non-negative",
                    ));
                }
            }
        }
        self.profile.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fleet {
    pub silos: Vec<Silo>,
    pub inter_silo_rtt_ms: Vec<Vec<f64>>,
}

/// Knobs for [`Fleet::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct FleetSpec {
    pub silos: usize,
    pub resources: (usize, usize),
    pub inter_silo_rtt_ms: (f64, f64),
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            silos: 8,
            resources: (6, 14),
            inter_silo_rtt_ms: (5.0, 100.0),
        }
    }
}

/// Archetype for silo `index`: the four profiles in rotation.
pub fn archetype(index: usize) -> ProfileKind {
    ProfileKind::ALL[index % 4]
}

/// Counts of (cloud, edge, iot) resources for an archetype.
pub fn tier_mix(kind: ProfileKind, total: usize) -> (usize, usize, usize) {
    let share = |f: f64| ((total as f64) * f).round() as usize;
    match kind {
        ProfileKind::CloudDominant => {
            let cloud = share(0.7).max(1);
            let edge = (total - cloud).div_ceil(2);
            (cloud, edge, total - cloud - edge)
        }
        ProfileKind::EdgeDominant => {
            let edge = share(0.6).max(1);
            let cloud = (total - edge) / 2;
            (cloud, edge, total - edge - cloud)
        }
        ProfileKind::Balanced => {
            let cloud = total / 3;
            let edge = (total - cloud) / 2;
            (cloud, edge, total - cloud - edge)
        }
        ProfileKind::IotDense => {
            let iot = (total / 2 + 1).min(total);
            let edge = (total - iot).div_ceil(2);
            (total - iot - edge, edge, iot)
        }
    }
}

fn sample_resource<R: Rng + ?Sized>(id: usize, tier: Tier, rng: &mut R) -> Resource {
    let (freq, mem_choices, storage, p_comp): ((f64, f64), &[f64], (f64, f64), (f64, f64)) = match tier {
        Tier::Iot => ((0.8, 1.5), &[1.0, 2.0], (8.0, 32.0), (2.0, 5.0)),
        Tier::Edge => ((1.8, 3.0), &[4.0, 8.0, 16.0], (64.0, 512.0), (15.0, 45.0)),
        Tier::Cloud => ((2.4, 4.0), &[16.0, 32.0, 64.0], (256.0, 2048.0), (60.0, 150.0)),
    };
    let p_comp = rng.random_range(p_comp.0..p_comp.1);
    let energy_j = (tier == Tier::Iot && rng.random_bool(0.5)).then(|| rng.random_range(10_000.0..=50_000.0));
    Resource {
        id,
        tier,
        freq_ghz: rng.random_range(freq.0..freq.1),
        mem_gb: mem_choices[rng.random_range(0..mem_choices.len())],
        storage_gb: rng.random_range(storage.0..storage.1),
        energy_j,
        p_send: p_comp * rng.random_range(0.1..0.2),
        p_recv: p_comp * rng.random_range(0.1..0.2),
        p_standby: p_comp * rng.random_range(0.05..0.1),
        p_comp,
    }
}

/// (RTT ms, bandwidth MB/s) sampling ranges for a tier pair.
pub fn link_ranges(a: Tier, b: Tier) -> ((f64, f64), (f64, f64)) {
    use Tier::*;
    match (a.min_tier(b), a.max_tier(b)) {
        (Iot, Edge) => ((1.0, 6.0), (10.0, 25.0)),
        (Iot, Cloud) => ((6.0, 25.0), (14.0, 22.0)),
        (Edge, Cloud) => ((6.0, 25.0), (15.0, 22.0)),
        (Iot, Iot) => ((1.0, 6.0), (10.0, 25.0)),
        (Edge, Edge) => ((1.0, 6.0), (15.0, 25.0)),
        _ => ((1.0, 5.0), (20.0, 25.0)),
    }
}

impl Tier {
    fn min_tier(self, other: Tier) -> Tier {
        if self.index() <= other.index() {
            self
        } else {
            other
        }
    }

    fn max_tier(self, other: Tier) -> Tier {
        if self.index() <= other.index() {
            other
        } else {
            self
        }
    }
}

fn build_silo<R: Rng + ?Sized>(id: usize, resources: (usize, usize), rng: &mut R) -> Silo {
    let kind = archetype(id);
    let total = rng.random_range(resources.0..=resources.1);
    let (cloud, edge, iot) = tier_mix(kind, total);
    let mut tiers: Vec<Tier> = std::iter::repeat_n(Tier::Cloud, cloud)
        .chain(std::iter::repeat_n(Tier::Edge, edge))
        .chain(std::iter::repeat_n(Tier::Iot, iot))
        .collect();
    tiers.shuffle(rng);
    let res: Vec<Resource> = tiers
        .iter()
        .enumerate()
        .map(|(i, t)| sample_resource(i, *t, rng))
        .collect();
    let n = res.len();
    let mut bw = vec![vec![LOOPBACK_BANDWIDTH_MBPS; n]; n];
    let mut rtt = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let (r, w) = link_ranges(res[a].tier, res[b].tier);
            let rv = rng.random_range(r.0..=r.1);
            let wv = rng.random_range(w.0..=w.1);
            rtt[a][b] = rv;
            rtt[b][a] = rv;
            bw[a][b] = wv;
            bw[b][a] = wv;
        }
    }
    Silo {
        id,
        resources: res,
        bandwidth_mbps: bw,
        rtt_ms: rtt,
        profile: WorkloadProfile::preset(kind),
    }
}

impl Fleet {
    pub fn build(spec: &FleetSpec, seed: u64) -> Result<Fleet> {
        if spec.silos < 2 {
            return Err(Error::InvalidParameter(format!(
                "a fleet needs at least 2 silos, got {}",
                spec.silos
            )));
        }
        if spec.resources.0 == 0 || spec.resources.0 > spec.resources.1 {
            return Err(Error::InvalidParameter("resource range must satisfy 1 <= lo <= hi".into()));
        }
        let silos = (0..spec.silos)
            .map(|i| build_silo(i, spec.resources, &mut seeding::stream(seed, tag::FLEET, i as u64)))
            .collect();
        let mut rng = seeding::stream(seed, tag::FLEET, u64::MAX);
        let m = spec.silos;
        let mut rtt = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let v = rng.random_range(spec.inter_silo_rtt_ms.0..=spec.inter_silo_rtt_ms.1);
                rtt[i][j] = v;
                rtt[j][i] = v;
            }
        }
        Ok(Fleet {
            silos,
            inter_silo_rtt_ms: rtt,
        })
    }

    pub fn len(&self) -> usize {
        self.silos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.silos.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.silos.len();
        if m < 2 {
            return Err(Error::config("silos", "a fleet needs at least 2 silos"));
        }
        if self.inter_silo_rtt_ms.len() != m || self.inter_silo_rtt_ms.iter().any(|r| r.len() != m) {
            return Err(Error::config("inter_silo_rtt_ms", "matrix side must equal silo count"));
        }
        for i in 0..m {
            if self.silos[i].id != i {
                return Err(Error::config(format!("silos[{i}].id"), "ids must be positional"));
            }
            self.silos[i].validate()?;
            for j in 0..m {
                let v = self.inter_silo_rtt_ms[i][j];
                if (i == j && v != 0.0) || v != self.inter_silo_rtt_ms[j][i] || !(v >= 0.0) {
                    return Err(Error::config("inter_silo_rtt_ms", "must be symmetric, non-negative, zero diagonal"));
                }
            }
        }
        Ok(())
    }

    /// Base RTT with multiplicative jitter in [0.9, 1.1] when `rng` is given.
    pub fn measure_rtt<R: Rng + ?Sized>(&self, i: usize, j: usize, rng: Option<&mut R>) -> Result<f64> {
        let m = self.silos.len();
        if i == j || i >= m || j >= m {
            return Err(Error::InvalidParameter(format!("cannot measure rtt between {i} and {j}")));
        }
        let base = self.inter_silo_rtt_ms[i][j];
        Ok(match rng {
            Some(r) => base * r.random_range(0.9..=1.1),
            None => base,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Environment(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Environment(e.to_string()))
    }

    /// Loads `.json` or `.toml` by extension and validates the result.
    pub fn load(path: &Path) -> Result<Fleet> {
        let text = std::fs::read_to_string(path)?;
        let fleet: Fleet = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse {
                line: toml_line(&text, e.span()),
                message: e.message().to_string(),
            })?
        };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = if path.extension().is_some_and(|e| e == "json") {
            self.to_json()?
        } else {
            self.to_toml()?
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub(crate) fn toml_line(text: &str, span: Option<std::ops::Range<usize>>) -> usize {
    span.map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

pub fn build_fleet(m: usize, seed: u64) -> Result<Fleet> {
    Fleet::build(
        &FleetSpec {
            silos: m,
            ..FleetSpec::default()
        },
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_silo() {
        assert!(build_fleet(1, 0).is_err());
    }

    #[test]
    fn twenty_silos_split_into_four_archetypes() {
        let fleet = build_fleet(20, 11).unwrap();
        for kind in ProfileKind::ALL {
            assert_eq!(fleet.silos.iter().filter(|s| s.profile.kind == kind).count(), 5);
        }
        assert_eq!(fleet.silos[0].profile.kind, ProfileKind::CloudDominant);
        assert_eq!(fleet.silos[19].profile.kind, ProfileKind::IotDense);
        fleet.validate().unwrap();
    }

    #[test]
    fn tier_mix_ratios() {
        for total in 6..=14 {
            let (c, _, _) = tier_mix(ProfileKind::CloudDominant, total);
            assert!((c as f64 / total as f64 - 0.7).abs() <= 0.5 / total as f64 + 1e-9);
            let (_, e, _) = tier_mix(ProfileKind::EdgeDominant, total);
            assert!((e as f64 / total as f64 - 0.6).abs() <= 0.5 / total as f64 + 1e-9);
            let (_, _, i) = tier_mix(ProfileKind::IotDense, total);
            assert!(i * 2 > total);
            let (c, e, i) = tier_mix(ProfileKind::Balanced, total);
            assert_eq!(c + e + i, total);
            assert!(c.abs_diff(e) <= 1 && e.abs_diff(i) <= 1);
        }
    }

    #[test]
    fn sampled_ranges_hold() {
        let fleet = build_fleet(12, 5).unwrap();
        for silo in &fleet.silos {
            let n = silo.resources.len();
            assert!((6..=14).contains(&n));
            for a in 0..n {
                let ra = &silo.resources[a];
                assert!(ra.p_standby < ra.p_comp);
                if let Some(e) = ra.energy_j {
                    assert_eq!(ra.tier, Tier::Iot);
                    assert!((10_000.0..=50_000.0).contains(&e));
                }
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    let (rtt, bw) = (silo.rtt_ms[a][b], silo.bandwidth_mbps[a][b]);
                    let pair = (ra.tier, silo.resources[b].tier);
                    match pair {
                        (Tier::Iot, Tier::Edge) | (Tier::Edge, Tier::Iot) => {
                            assert!((1.0..=6.0).contains(&rtt) && (10.0..=25.0).contains(&bw))
                        }
                        (Tier::Edge, Tier::Cloud) | (Tier::Cloud, Tier::Edge) => {
                            assert!((6.0..=25.0).contains(&rtt) && (15.0..=22.0).contains(&bw))
                        }
                        (Tier::Iot, Tier::Cloud) | (Tier::Cloud, Tier::Iot) => {
                            assert!((6.0..=25.0).contains(&rtt) && (14.0..=22.0).contains(&bw))
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    #[test]
    fn measure_rtt_jitter_and_errors() {
        let mut fleet = build_fleet(3, 1).unwrap();
        fleet.inter_silo_rtt_ms[0][1] = 50.0;
        fleet.inter_silo_rtt_ms[1][0] = 50.0;
        let mut rng = seeding::stream(1, 0, 0);
        for _ in 0..100 {
            let v = fleet.measure_rtt(0, 1, Some(&mut rng)).unwrap();
            assert!((45.0..=55.0).contains(&v));
        }
        assert_eq!(fleet.measure_rtt::<seeding::SimRng>(0, 1, None).unwrap(), 50.0);
        assert!(fleet.measure_rtt::<seeding::SimRng>(2, 2, None).is_err());
        assert_eq!(fleet.inter_silo_rtt_ms[0][2], fleet.inter_silo_rtt_ms[2][0]);
    }

    #[test]
    fn fleet_roundtrips_through_toml_and_json() {
        let fleet = build_fleet(4, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["fleet.toml", "fleet.json"] {
            let p = dir.path().join(name);
            fleet.save(&p).unwrap();
            assert_eq!(Fleet::load(&p).unwrap(), fleet);
        }
    }
}
