//! Classical stable-matching algorithms and the brute-force oracle.

pub mod dacc;
pub mod enumerate;
pub mod gale_shapley;
pub mod hungarian;
pub mod power_balance;

pub use dacc::{dacc, dacc_traced, DaccOutcome};
pub use enumerate::{enumerate_stable, oracle_optimal, polymin, StableSet, DEFAULT_ENUMERATION_LIMIT};
pub use gale_shapley::{gale_shapley, gs_best, Side};
pub use hungarian::hungarian;
pub use power_balance::{break_marriage, power_balance};
