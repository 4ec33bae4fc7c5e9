//! Decentralized aggregation: RTT-based overlay, gossip exchange,
//! fingerprint-similarity anomaly filtering, weighted actor mixing, and
//! gradient tracking for the critic.

mod adversary;
mod aggregate;
mod gossip;
mod topology;

pub use adversary::{apply_adversary, corrupt_tracking, AdversaryMode, AdversarySpec, Message, TrackingMessage};
pub use aggregate::{
    actor_aggregate, detect_anomalies, robust_gradient, similarity_weights, tracking_update, uniform_mean, RingTracker,
    TrackingVariable,
};
pub use gossip::{
    gossip_round, read_protocol_log, write_protocol_log, ActorMix, CriticMix, FederationConfig, MixingRule, NeighborSwap,
    Participant, ProtocolRecord,
};
pub use topology::{build_topology, effective_degree, NeighborLink, Topology};

#[cfg(test)]
mod tests;
