//! A permutation-equivariant network that maps two preference tables to a
//! soft matching, the relaxed losses it is trained on without labels, and
//! the training loop.

pub mod config;
pub mod error;
pub mod loss;
pub mod model;
pub mod trainer;

pub use config::{ModelConfig, Variant};
pub use error::{NnError, Result};
pub use loss::{
    composite, loss_b, loss_f, loss_m_cosine, loss_m_euclidean, loss_s, LossBreakdown, LossKind, LossTerms,
    LossWeights, MatrixLoss, ScoreConsts,
};
pub use model::{
    cross_concatenate, make_asymmetric_inputs, score_tensors, soft_matching, Mode, Output, SoftMatching, WeaveNet,
};
pub use trainer::{
    evaluate_validation, match_metrics, train, MatchMetrics, TrainConfig, TrainLog, TrainOutcome, ValidationRecord,
};
