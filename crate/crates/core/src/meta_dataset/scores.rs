use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// How raw forecasting errors become ground-truth scores (higher = better).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    /// `(max_e - e_k) / (max_e - min_e)`; all-equal errors map to 0.5.
    #[default]
    MinMax,
    /// `(K - rank_k) / (K - 1)` with 1-based ascending-error ranks, ties
    /// averaged; a single model maps to 0.5.
    Rank,
}

/// Turn lower-is-better errors into scores in `[0, 1]`.
pub fn normalize_scores(errors: &[f64], how: ScoreNormalization) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(invalid!("no errors to normalize"));
    }
    if let Some(i) = errors.iter().position(|e| !e.is_finite()) {
        return Err(invalid!("error of model {i} is not finite"));
    }
    let k = errors.len();
    match how {
        ScoreNormalization::MinMax => {
            let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
            if max == min {
                return Ok(vec![0.5; k]);
            }
            Ok(errors.iter().map(|e| (max - e) / (max - min)).collect())
        }
        ScoreNormalization::Rank => {
            if k == 1 {
                return Ok(vec![0.5]);
            }
            // Ascending-error ranks are descending-score ranks of -e.
            let neg: Vec<f64> = errors.iter().map(|e| -e).collect();
            let ranks = crate::metrics::descending_ranks(&neg);
            Ok(ranks
                .iter()
                .map(|r| (k as f64 - (r + 1.0)) / (k as f64 - 1.0))
                .collect())
        }
    }
}
