//! Two-sided stable matching: instances, fairness costs, seeded instance
//! generators, and the classical solvers used as baselines and oracles.

pub mod binarize;
pub mod error;
pub mod generator;
pub mod instance;
pub mod matching;
pub mod solvers;

pub use binarize::{binarize_argmax, binarize_hungarian, ArgmaxOutcome};
pub use error::{CoreError, Result};
pub use generator::{Dataset, DatasetSpec, DistributionSpec, Histogram, Manifest, Setting};
pub use instance::{rank_score, scale_ranks, PreferenceInstance, Provenance, ScoreMatrices, DEFAULT_C_MIN};
pub use matching::{
    cost_report, count_blocking_pairs, find_blocking_pairs, is_stable, CostKind, CostReport, Matching,
};
