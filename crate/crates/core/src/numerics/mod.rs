//! Dense linear algebra, a small MLP with hand-written backward passes, and
//! the robust statistics used by the scheduler and the aggregation protocol.

mod linalg;
mod stats;

pub use linalg::{
    next_stamp, LinearGrads, LinearLayer, LinearTape, Matrix, Mlp, MlpGrads, MlpTape,
};
pub use stats::{
    argmax_masked, cosine_similarity, dot, empirical_cvar, l2_norm, mean, median, median_mad,
    masked_softmax, relu, std_dev,
};
