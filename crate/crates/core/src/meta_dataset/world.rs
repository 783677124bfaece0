//! Desk-scale synthetic world: regime-mixed datasets, the synthetic hub, and
//! oracle ground truth for every (dataset, horizon) pair.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::meta_dataset::{
    oracle_ground_truth, synthetic_hub, MetaDataset, OracleConfig, SplitRatio, SyntheticModel, TimeSeriesDataset,
};
use crate::rng::{seeded, stable_hash, substream_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_datasets: usize,
    pub k: usize,
    pub horizons: Vec<usize>,
    pub min_len: usize,
    pub max_len: usize,
    /// Datasets per regime family; 1 gives every dataset its own regime.
    pub family_size: usize,
    pub oracle: OracleConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_datasets: 14,
            k: 8,
            horizons: vec![96, 192, 336, 720],
            min_len: 4500,
            max_len: 6000,
            family_size: 5,
            oracle: OracleConfig::default(),
        }
    }
}

pub struct World {
    pub datasets: Vec<TimeSeriesDataset>,
    pub hub: Vec<SyntheticModel>,
    pub meta: MetaDataset,
    /// Oracle notes (ridge fallbacks), in sample order.
    pub notes: Vec<String>,
}

const PERIODS: [usize; 4] = [24, 12, 7, 48];

fn tags(period: Option<usize>) -> (&'static str, &'static str) {
    match period {
        Some(24) => ("electricity", "hourly"),
        Some(12) => ("environment", "monthly"),
        Some(7) => ("traffic", "daily"),
        Some(48) => ("energy", "half_hourly"),
        _ => ("economic", "daily"),
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generative parameters of a dataset: trend, zero to two seasonalities,
/// AR noise, and optionally a nonlinear or random-walk component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub periods: Vec<usize>,
    pub amplitudes: Vec<f64>,
    /// Total drift over the series, in noise-free units.
    pub trend: f64,
    pub phi: f64,
    pub noise: f64,
    pub nonlinear: bool,
    pub walk: f64,
}

impl Regime {
    pub fn draw(rng: &mut Rng) -> Self {
        let n_seasonal = rng.random_range(0..=2usize);
        let periods: Vec<usize> = PERIODS.choose_multiple(rng, n_seasonal).copied().collect();
        let amplitudes = periods.iter().map(|_| rng.random_range(0.3..2.5)).collect();
        let trend = if rng.random_bool(0.4) { rng.random_range(-4.0..4.0) } else { 0.0 };
        let phi = rng.random_range(0.1..0.97);
        let noise = rng.random_range(0.1..1.0);
        let nonlinear = rng.random_bool(0.3);
        let walk = if rng.random_bool(0.2) { rng.random_range(0.02..0.1) } else { 0.0 };
        Regime {
            periods,
            amplitudes,
            trend,
            phi,
            noise,
            nonlinear,
            walk,
        }
    }

    /// A sibling regime: same components, continuous parameters perturbed
    /// by up to 20%.
    pub fn jitter(&self, rng: &mut Rng) -> Self {
        let mut f = || rng.random_range(0.8..1.2);
        Regime {
            periods: self.periods.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * f()).collect(),
            trend: self.trend * f(),
            phi: (self.phi * f()).clamp(0.05, 0.98),
            noise: self.noise * f(),
            nonlinear: self.nonlinear,
            walk: self.walk * f(),
        }
    }
}

/// One dataset with its own freshly drawn regime.
pub fn synthetic_dataset(id: &str, seed: u64, min_len: usize, max_len: usize) -> Result<TimeSeriesDataset> {
    let regime = Regime::draw(&mut seeded(stable_hash(seed, &format!("regime/{id}"))));
    regime_dataset(id, &regime, seed, min_len, max_len)
}

/// One dataset under `regime`. Channels share the regime with independent
/// noise, phases and jittered amplitudes.
pub fn regime_dataset(
    id: &str,
    regime: &Regime,
    seed: u64,
    min_len: usize,
    max_len: usize,
) -> Result<TimeSeriesDataset> {
    if min_len == 0 || max_len < min_len {
        return Err(invalid!("invalid length range {min_len}..={max_len}"));
    }
    let mut rng = seeded(stable_hash(seed, id));
    let n = rng.random_range(min_len..=max_len);
    let channels = rng.random_range(1..=3usize);
    let split = if rng.random_bool(0.5) {
        SplitRatio::new(6, 2, 2)
    } else {
        SplitRatio::new(7, 1, 2)
    };
    let Regime {
        periods,
        amplitudes,
        phi,
        noise,
        nonlinear,
        walk,
        ..
    } = regime;
    let (phi, noise, walk) = (*phi, *noise, *walk);
    let trend = regime.trend / n as f64;

    let columns = (0..channels)
        .map(|_| {
            let jitter = rng.random_range(0.7..1.3);
            let phases: Vec<f64> = periods.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let level = rng.random_range(-5.0..5.0);
            let scale = rng.random_range(0.5..20.0);
            let (mut ar, mut rw) = (0.0f64, 0.0f64);
            (0..n)
                .map(|t| {
                    let eps = normal(&mut rng);
                    ar = if *nonlinear {
                        phi * ar + 0.8 * (1.5 * ar).sin() * (1.0 - phi) + noise * eps
                    } else {
                        phi * ar + noise * eps
                    };
                    rw += walk * normal(&mut rng);
                    let season: f64 = periods
                        .iter()
                        .zip(amplitudes)
                        .zip(&phases)
                        .map(|((&p, a), ph)| {
                            let w = 2.0 * PI * t as f64 / p as f64;
                            jitter * a * ((w + ph).sin() + 0.3 * (2.0 * w + ph).cos())
                        })
                        .sum();
                    level + scale * (trend * t as f64 + season + ar + rw)
                })
                .collect()
        })
        .collect();
    let (domain, freq) = tags(periods.first().copied());
    TimeSeriesDataset::from_columns(id, domain, freq, columns, split)
}

/// The regime of every dataset in a world: `ceil(n / family_size)` base
/// regimes, dataset `i` joining family `i mod families` with jitter.
pub fn world_regimes(seed: u64, n_datasets: usize, family_size: usize) -> Result<Vec<Regime>> {
    if family_size == 0 {
        return Err(invalid!("family size must be at least 1"));
    }
    let families = n_datasets.div_ceil(family_size);
    let bases: Vec<Regime> = (0..families)
        .map(|f| Regime::draw(&mut seeded(stable_hash(seed, &format!("family{f}")))))
        .collect();
    Ok((0..n_datasets)
        .map(|i| {
            let base = &bases[i % families];
            if family_size == 1 {
                base.clone()
            } else {
                base.jitter(&mut seeded(stable_hash(seed, &format!("jitter{i}"))))
            }
        })
        .collect())
}

/// Generate datasets, hub and oracle meta-dataset. Samples are ordered by
/// dataset id, then horizon.
pub fn generate_synthetic_world(seed: u64, cfg: &WorldConfig) -> Result<World> {
    if cfg.n_datasets < 4 {
        return Err(invalid!("a world needs at least 4 datasets, got {}", cfg.n_datasets));
    }
    if cfg.k < 2 {
        return Err(invalid!("a world needs at least 2 hub models, got {}", cfg.k));
    }
    if cfg.horizons.is_empty() || cfg.horizons.contains(&0) {
        return Err(invalid!("horizons must be a non-empty list of positive integers"));
    }
    let world_seed = substream_seed(seed, "world");
    let hub = synthetic_hub(cfg.k, substream_seed(world_seed, "hub"))?;
    let regimes = world_regimes(world_seed, cfg.n_datasets, cfg.family_size)?;
    let datasets: Vec<TimeSeriesDataset> = regimes
        .iter()
        .enumerate()
        .map(|(i, r)| regime_dataset(&format!("synth-{i:02}"), r, world_seed, cfg.min_len, cfg.max_len))
        .collect::<Result<_>>()?;
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let pairs: Vec<(&TimeSeriesDataset, usize)> =
        datasets.iter().flat_map(|d| horizons.iter().map(move |&h| (d, h))).collect();
    let outcomes = pairs
        .par_iter()
        .map(|(d, h)| oracle_ground_truth(&hub, d, *h, &cfg.oracle))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(outcomes.len());
    let mut notes = Vec::new();
    for o in outcomes {
        notes.extend(o.notes);
        samples.push(o.sample);
    }
    let meta = MetaDataset::new(hub.iter().map(|m| m.id.clone()).collect(), samples)?;
    Ok(World {
        datasets,
        hub,
        meta,
        notes,
    })
}

/// Index of the best model for every sample (first on ties).
pub fn top1_models(meta: &MetaDataset) -> Vec<usize> {
    meta.samples.iter().map(|s| crate::metrics::argmax(&s.scores)).collect()
}
