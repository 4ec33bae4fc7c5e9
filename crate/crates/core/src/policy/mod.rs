//! Candidate-scoring actor, fixed-head actor for the ablation, critic, and
//! feature extraction.
//!
//! Canonical flat layout of the scoring actor with hidden width `H`
//! (row-major weights, offsets in f64 slots):
//!
//! | field              | shape   | offset          |
//! |--------------------|---------|-----------------|
//! | task_enc.weights   | H x 8   | 0               |
//! | task_enc.bias      | H       | 8H              |
//! | resource_enc.weights | H x 12 | 9H             |
//! | resource_enc.bias  | H       | 21H             |
//! | global_enc.weights | H x 8   | 22H             |
//! | global_enc.bias    | H       | 30H             |
//! | fusion_w           | 4H      | 31H             |
//!
//! Total `35H`. The critic with hidden width `Hv` is `hidden.weights (Hv x
//! 16)`, `hidden.bias (Hv)`, `out_w (Hv)`, `out_b (1)`: total `18Hv + 1`.

mod actor;
mod critic;
mod features;
mod fixed_head;

pub use actor::{act, ActMode, ActorForward, ActorModel, ActorParams, Decision, ScoreTape};
pub use critic::CriticParams;
pub use features::{extract_features, FeatureScales, FeatureVectors, GLOBAL_DIM, RESOURCE_DIM, STATE_DIM, TASK_DIM};
pub use fixed_head::FixedHeadParams;

#[cfg(test)]
mod tests;
