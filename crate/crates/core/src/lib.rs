//! Multi-silo DAG scheduling simulator with per-silo actor-critic learners and
//! a decentralized, anomaly-filtered gossip aggregation protocol.

pub mod error;
pub mod federation;
pub mod harness;
pub mod infra;
pub mod learner;
pub mod numerics;
pub mod policy;
pub mod seeding;
pub mod simenv;
pub mod workload;

pub use error::{Error, Result};
