use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infra::Fleet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborLink {
    pub id: usize,
    pub rtt_ms: f64,
}

/// Directed overlay: silo `i` pulls messages from `neighbors[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub neighbors: Vec<Vec<NeighborLink>>,
    pub d_max: usize,
}

impl Topology {
    /// Complete or fixed overlays for tests and standalone use.
    pub fn from_lists(lists: Vec<Vec<usize>>, d_max: usize) -> Result<Topology> {
        let m = lists.len();
        for (i, l) in lists.iter().enumerate() {
            if l.len() > d_max || l.iter().any(|&j| j == i || j >= m) {
                return Err(Error::InvalidParameter(format!("bad neighbor list for silo {i}")));
            }
        }
        Ok(Topology {
            neighbors: lists
                .into_iter()
                .map(|l| l.into_iter().map(|id| NeighborLink { id, rtt_ms: 0.0 }).collect())
                .collect(),
            d_max,
        })
    }

    pub fn silos(&self) -> usize {
        self.neighbors.len()
    }

    pub fn ids(&self, silo: usize) -> Vec<usize> {
        self.neighbors[silo].iter().map(|l| l.id).collect()
    }

    /// Recommendation list a silo shares with the silos that pull from it.
    pub fn recommendations(&self, silo: usize) -> Vec<NeighborLink> {
        self.neighbors[silo].clone()
    }

    /// Replaces the highest-RTT neighbor of `silo`; returns the evicted link.
    pub fn swap_worst(&mut self, silo: usize, incoming: NeighborLink) -> Option<NeighborLink> {
        let list = &mut self.neighbors[silo];
        let worst = worst_index(list)?;
        let out = list[worst];
        list[worst] = incoming;
        Some(out)
    }

    pub fn worst(&self, silo: usize) -> Option<NeighborLink> {
        worst_index(&self.neighbors[silo]).map(|w| self.neighbors[silo][w])
    }
}

fn worst_index(list: &[NeighborLink]) -> Option<usize> {
    (0..list.len()).max_by(|&a, &b| list[a].rtt_ms.total_cmp(&list[b].rtt_ms).then(b.cmp(&a)))
}

/// Each silo samples `k_sample` candidates, measures RTT, and keeps the
/// `d_max` closest.
pub fn build_topology<R: Rng + ?Sized>(fleet: &Fleet, d_max: usize, k_sample: usize, rng: &mut R) -> Result<Topology> {
    let m = fleet.len();
    if d_max == 0 || k_sample < d_max || m <= d_max || k_sample > m - 1 {
        return Err(Error::InvalidParameter(format!(
            "topology needs 0 < d_max <= k_sample <= M-1 and M > d_max (M={m}, d_max={d_max}, k_sample={k_sample})"
        )));
    }
    let mut neighbors = Vec::with_capacity(m);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let picks = sample(rng, others.len(), k_sample);
        let mut measured = Vec::with_capacity(k_sample);
        for p in picks.iter() {
            let j = others[p];
            measured.push(NeighborLink {
                id: j,
                rtt_ms: fleet.measure_rtt(i, j, Some(&mut *rng))?,
            });
        }
        measured.sort_by(|a, b| a.rtt_ms.total_cmp(&b.rtt_ms).then(a.id.cmp(&b.id)));
        measured.truncate(d_max);
        neighbors.push(measured);
    }
    Ok(Topology { neighbors, d_max })
}

/// Clamps the neighbor budget to what a fleet of `m` silos can offer.
pub fn effective_degree(m: usize, d_max: usize, k_sample: usize) -> (usize, usize) {
    let cap = m.saturating_sub(1).max(1);
    let d = d_max.min(cap);
    (d, k_sample.clamp(d, cap))
}
