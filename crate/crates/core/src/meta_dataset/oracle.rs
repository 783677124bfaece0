//! Brute-force ground truth: refit every hub model's head on the training
//! split and score it by test-split MSE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::meta_dataset::{
    normalize_scores, MetaSample, Provenance, ScoreNormalization, SyntheticModel, TimeSeriesDataset, Windows,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Upper bound on fitting (and on scoring) windows per channel.
    pub max_windows: usize,
    pub ridge: f64,
    pub normalization: ScoreNormalization,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_windows: 192,
            ridge: 1e-6,
            normalization: ScoreNormalization::MinMax,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    pub sample: MetaSample,
    /// Test-split MSE per model, in hub order.
    pub mse: Vec<f64>,
    pub notes: Vec<String>,
}

/// Test MSE of one model after refitting its head for `horizon`.
/// Data must already be standardized. Returns the MSE and whether the
/// ridge fallback engaged.
pub fn adapted_mse(
    model: &SyntheticModel,
    dataset: &TimeSeriesDataset,
    horizon: usize,
    cfg: &OracleConfig,
) -> Result<(f64, bool)> {
    let (train_end, val_end) = dataset.bounds();
    let n = dataset.n_steps();
    let rf = model.receptive_field();
    let series: Vec<Vec<f64>> = (0..dataset.n_channels()).map(|c| dataset.channel(c).to_vec()).collect();

    let fit_positions = (train_end + 1).saturating_sub(rf + horizon);
    let test_start = val_end.max(rf);
    let test_positions = (n + 1).saturating_sub(test_start + horizon);
    if fit_positions == 0 || test_positions == 0 {
        return Err(invalid!(
            "dataset `{}` is too short for horizon {horizon} (train {train_end}, test {})",
            dataset.id,
            n - val_end
        ));
    }
    let (x, y) = model.design(&series, rf, train_end, horizon, Windows::Budget(cfg.max_windows))?;
    let (w, ridged) = super::hub::least_squares(&x, &y, cfg.ridge)?;
    let (xt, yt) = model.design(&series, test_start, n, horizon, Windows::Budget(cfg.max_windows))?;
    let resid = xt * w - yt;
    let mse = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
    Ok((mse, ridged))
}

/// Ground-truth scores of `hub` on `dataset` at `horizon`.
pub fn oracle_ground_truth(
    hub: &[SyntheticModel],
    dataset: &TimeSeriesDataset,
    horizon: usize,
    cfg: &OracleConfig,
) -> Result<OracleOutcome> {
    if hub.is_empty() {
        return Err(invalid!("empty hub"));
    }
    if horizon == 0 {
        return Err(invalid!("horizon must be positive"));
    }
    let std = dataset.standardized()?;
    let results: Vec<(f64, bool)> = hub
        .par_iter()
        .map(|m| adapted_mse(m, &std, horizon, cfg))
        .collect::<Result<_>>()?;
    let mut notes = Vec::new();
    for (m, (_, ridged)) in hub.iter().zip(&results) {
        if *ridged {
            let note = format!(
                "{}@{horizon}: singular least-squares system for `{}`, used ridge {}",
                dataset.id, m.id, cfg.ridge
            );
            log::info!("{note}");
            notes.push(note);
        }
    }
    let mse: Vec<f64> = results.iter().map(|r| r.0).collect();
    let scores = normalize_scores(&mse, cfg.normalization)?;
    Ok(OracleOutcome {
        sample: MetaSample {
            dataset_id: dataset.id.clone(),
            horizon,
            scores,
            provenance: Provenance::Oracle,
        },
        mse,
        notes,
    })
}
