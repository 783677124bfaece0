//! Functional probing: characterize a model by its outputs on a fixed batch
//! of Gaussian noise windows.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::rng::seeded;

/// Anything that maps a look-back window to a multi-step forecast.
pub trait Forecaster {
    fn forecast(&self, window: &[f64], horizon: usize) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_probe: usize,
    pub window: usize,
    pub horizon: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n_probe: 4,
            window: 96,
            horizon: 96,
            dim: 32,
            seed: 0x0050_524f_4245,
        }
    }
}

/// The shared noise inputs, `n_probe` windows of standard normal values.
pub fn probe_batch(cfg: &ProbeConfig) -> Vec<Vec<f64>> {
    let mut rng = seeded(cfg.seed);
    (0..cfg.n_probe)
        .map(|_| (0..cfg.window).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Concatenated forecasts of `model` over the probe batch.
pub fn probe_signature(model: &dyn Forecaster, cfg: &ProbeConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.n_probe * cfg.horizon);
    for window in probe_batch(cfg) {
        let y = model.forecast(&window, cfg.horizon)?;
        if y.len() != cfg.horizon {
            return Err(shape_err!(
                "probe forecast has {} steps, expected {}",
                y.len(),
                cfg.horizon
            ));
        }
        out.extend(y);
    }
    Ok(out)
}

/// Project a raw signature to `cfg.dim` values with a fixed Gaussian matrix
/// that depends only on the probe seed and the signature length.
pub fn project_signature(raw: &[f64], cfg: &ProbeConfig) -> Vec<f64> {
    let n = raw.len();
    let mut rng = seeded(cfg.seed ^ (n as u64).rotate_left(32) ^ 0x9e37_79b9);
    let scale = 1.0 / (n.max(1) as f64).sqrt();
    let mut out = vec![0.0; cfg.dim];
    for x in raw {
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o += scale * z * x;
        }
    }
    out
}
