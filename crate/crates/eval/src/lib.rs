//! Benchmark harness for stable-matching methods: binarisation of network
//! outputs, per-instance scoring, win/tie/loss against the best classical
//! baseline, blocking-pair histograms, and CSV/JSON reports.

pub mod bench;
pub mod error;
pub mod report;

pub use bench::{binarize, network_logits, run_benchmark, solve, Binarize, Method};
pub use error::{EvalError, Result};
pub use report::{
    compare_wtl, optimal_hit_rate, BlockingHistogram, EvalReport, EvalRow, MethodSummary, WinTieLoss,
    REPORT_FORMAT_VERSION, ROW_COLUMNS, SUMMARY_COLUMNS,
};
pub use weavematch_core::{binarize_argmax, binarize_hungarian, ArgmaxOutcome};
