//! Turning a soft assignment matrix into a discrete matching.

use crate::error::{CoreError, Result};
use crate::matching::Matching;
use crate::solvers::hungarian;

/// Row-wise argmax of a soft matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxOutcome {
    /// Chosen column per row.
    pub choices: Vec<usize>,
    /// `None` when some column was chosen by more than one row.
    pub matching: Option<Matching>,
}

impl ArgmaxOutcome {
    pub fn is_valid(&self) -> bool {
        self.matching.is_some()
    }
}

fn check_dims(scores: &[f64], n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || scores.len() != n * m {
        return Err(CoreError::InvalidCostMatrix(format!(
            "expected {n}x{m} scores, got {} values",
            scores.len()
        )));
    }
    Ok(())
}

/// Picks the highest entry of each row of the row-major `n x m` matrix.
/// Ties go to the lowest column; NaN never wins.
pub fn binarize_argmax(scores: &[f64], n: usize, m: usize) -> Result<ArgmaxOutcome> {
    check_dims(scores, n, m)?;
    let choices: Vec<usize> = scores
        .chunks(m)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] || row[best].is_nan() && !v.is_nan() {
                    best = j;
                }
            }
            best
        })
        .collect();
    let matching = Matching::new(choices.iter().map(|&j| Some(j)).collect(), m).ok();
    Ok(ArgmaxOutcome { choices, matching })
}

/// One-to-one matching maximising the total score (minimum-cost assignment
/// on `1 - score`). Square matrices only.
pub fn binarize_hungarian(scores: &[f64], n: usize, m: usize) -> Result<Matching> {
    check_dims(scores, n, m)?;
    if n != m {
        return Err(CoreError::NotSquare { n, m });
    }
    let cost: Vec<Vec<f64>> = scores.chunks(m).map(|row| row.iter().map(|v| 1.0 - v).collect()).collect();
    Ok(hungarian(&cost)?.0)
}
