//! Synthetic forecasters standing in for a hub of pre-trained models.
//!
//! Every model is a frozen feature extractor followed by a linear head, so
//! "fine-tuning" reduces to a closed-form least-squares refit of the head.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::model_encoder::{probe_signature, Architecture, DagGraph, Forecaster, ModelCard, ProbeConfig};
use crate::numerics::{normal_tensor, ParamStore, Tensor};
use crate::rng::{seeded, stable_hash};

/// Horizon of the stored pre-trained heads; longer forecasts recurse.
pub const PRETRAIN_HORIZON: usize = 96;

const HEAD: &str = "head.weight";
const HIDDEN_W: &str = "mlp.hidden.weight";
const HIDDEN_B: &str = "mlp.hidden.bias";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    LinearAr,
    WindowedMlp,
    SeasonalMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    LinearAr { order: usize },
    WindowedMlp { window: usize, hidden: usize },
    SeasonalMean { period: usize, cycles: usize },
}

impl FamilySpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            FamilySpec::LinearAr { .. } => ModelFamily::LinearAr,
            FamilySpec::WindowedMlp { .. } => ModelFamily::WindowedMlp,
            FamilySpec::SeasonalMean { .. } => ModelFamily::SeasonalMean,
        }
    }

    pub fn receptive_field(&self) -> usize {
        match *self {
            FamilySpec::LinearAr { order } => order,
            FamilySpec::WindowedMlp { window, .. } => window,
            FamilySpec::SeasonalMean { period, cycles } => period * cycles,
        }
    }

    /// Width of the feature vector, including the trailing bias feature.
    pub fn n_features(&self) -> usize {
        match *self {
            FamilySpec::LinearAr { order } => order + 1,
            FamilySpec::WindowedMlp { hidden, .. } => hidden + 1,
            FamilySpec::SeasonalMean { period, .. } => period + 1,
        }
    }
}

/// Declared meta-information of a hub model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub architecture: Architecture,
    pub param_count: u64,
    pub gmacs: f64,
    pub hidden_dim: u64,
    pub pretrain_domains: BTreeSet<String>,
}

/// Which window end points enter a design matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Windows {
    /// Every `n`-th position from the first.
    Stride(usize),
    /// At most `n` positions spread evenly over the range, first and last
    /// included. The spacing is fractional, so periodic series are not
    /// sampled at a fixed phase.
    Budget(usize),
}

impl Windows {
    /// Positions in `[first, last]`.
    pub fn positions(self, first: usize, last: usize) -> Vec<usize> {
        let span = last - first;
        match self {
            Windows::Stride(n) => (first..=last).step_by(n.max(1)).collect(),
            Windows::Budget(n) if n <= 1 => vec![first],
            Windows::Budget(n) if span < n => (first..=last).collect(),
            Windows::Budget(n) => (0..n).map(|i| first + i * span / (n - 1)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticModel {
    pub id: String,
    pub spec: FamilySpec,
    pub params: ParamStore,
    pub meta: ModelMeta,
    pub dag: DagGraph,
}

/// Solve `min ‖X W − Y‖²` through the normal equations. Falls back to a
/// ridge of `ridge` when `XᵀX` is not positive definite; the returned flag
/// records the fallback.
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, bool)> {
    if x.nrows() != y.nrows() {
        return Err(shape_err!("{} feature rows vs {} target rows", x.nrows(), y.nrows()));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    if let Some(ch) = xtx.clone().cholesky() {
        // Reject numerically singular factorizations (pivot ratio ~ 1/cond).
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if lo > 0.0 && (lo / hi).powi(2) > 1e-12 {
            let w = ch.solve(&xty);
            if w.iter().all(|v| v.is_finite()) {
                return Ok((w, false));
            }
        }
    }
    let scale = (0..xtx.nrows()).map(|i| xtx[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut reg = xtx;
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge * scale;
    }
    let ch = reg
        .cholesky()
        .ok_or_else(|| invalid!("least-squares system is singular even with ridge {ridge}"))?;
    Ok((ch.solve(&xty), true))
}

impl SyntheticModel {
    /// Build a model and "pre-train" its head on a seeded generic corpus.
    pub fn new(id: impl Into<String>, spec: FamilySpec, meta: ModelMeta, seed: u64) -> Result<Self> {
        let id = id.into();
        let mut rng = seeded(stable_hash(seed, &id));
        let mut params = ParamStore::new();
        if let FamilySpec::WindowedMlp { window, hidden } = spec {
            params.insert(HIDDEN_W, normal_tensor(&[window, hidden], 1.5 / (window as f64).sqrt(), &mut rng))?;
            params.insert(HIDDEN_B, normal_tensor(&[hidden], 0.5, &mut rng))?;
        }
        let dag = family_dag(&spec);
        let mut model = SyntheticModel {
            id,
            spec,
            params,
            meta,
            dag,
        };
        let head = match spec {
            FamilySpec::SeasonalMean { period, .. } => {
                // Seasonal-naive head: step h repeats the averaged phase h mod period.
                let f = spec.n_features();
                let mut w = Tensor::zeros(&[f, PRETRAIN_HORIZON]);
                for h in 0..PRETRAIN_HORIZON {
                    w.data_mut()[(h % period) * PRETRAIN_HORIZON + h] = 1.0;
                }
                w
            }
            FamilySpec::LinearAr { .. } => model.pretrain_head(1, &mut rng)?,
            FamilySpec::WindowedMlp { .. } => model.pretrain_head(PRETRAIN_HORIZON, &mut rng)?,
        };
        model.params.insert(HEAD, head)?;
        Ok(model)
    }

    fn pretrain_head(&self, horizon: usize, rng: &mut crate::rng::Rng) -> Result<Tensor> {
        // Generic corpus: damped seasonality plus AR(1) noise.
        let n = 2400;
        let mut x = vec![0.0; n];
        let mut ar = 0.0;
        for (t, v) in x.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            ar = 0.8 * ar + 0.4 * z;
            *v = (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin() + ar;
        }
        let series = [x];
        let (feats, targets) = self.design(&series, 0, n, horizon, Windows::Stride(4))?;
        let (w, _) = least_squares(&feats, &targets, 1e-6)?;
        Tensor::new(vec![w.nrows(), w.ncols()], row_major(&w))
    }

    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }

    pub fn receptive_field(&self) -> usize {
        self.spec.receptive_field()
    }

    /// Frozen features of the last `receptive_field` values of `window`.
    pub fn features(&self, window: &[f64]) -> Result<Vec<f64>> {
        let rf = self.receptive_field();
        if window.len() < rf {
            return Err(invalid!(
                "model `{}` needs at least {rf} points, got {}",
                self.id,
                window.len()
            ));
        }
        let x = &window[window.len() - rf..];
        let mut f = Vec::with_capacity(self.spec.n_features());
        match self.spec {
            FamilySpec::LinearAr { .. } => f.extend(x.iter().rev()),
            FamilySpec::WindowedMlp { window, hidden } => {
                let w = self.params.get(HIDDEN_W)?.data();
                let b = self.params.get(HIDDEN_B)?.data();
                let mut h = b.to_vec();
                for (i, xi) in x.iter().enumerate() {
                    let row = &w[i * hidden..(i + 1) * hidden];
                    h.iter_mut().zip(row).for_each(|(a, wv)| *a += xi * wv);
                }
                debug_assert_eq!(x.len(), window);
                f.extend(h.into_iter().map(f64::tanh));
            }
            FamilySpec::SeasonalMean { period, cycles } => {
                for phase in 0..period {
                    let s: f64 = (0..cycles).map(|c| x[c * period + phase]).sum();
                    f.push(s / cycles as f64);
                }
            }
        }
        f.push(1.0);
        Ok(f)
    }

    /// Feature and target matrices for windows whose context ends at
    /// `t ∈ [start, end - horizon]` over each series, chosen by `windows`.
    pub fn design(
        &self,
        series: &[Vec<f64>],
        start: usize,
        end: usize,
        horizon: usize,
        windows: Windows,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let rf = self.receptive_field();
        let nf = self.spec.n_features();
        let mut feats = Vec::new();
        let mut targets = Vec::new();
        let mut rows = 0;
        for s in series {
            let end = end.min(s.len());
            let first = start.max(rf);
            if first + horizon > end {
                continue;
            }
            for t in windows.positions(first, end - horizon) {
                feats.extend(self.features(&s[..t])?);
                targets.extend_from_slice(&s[t..t + horizon]);
                rows += 1;
            }
        }
        if rows == 0 {
            return Err(invalid!(
                "no complete windows for model `{}` at horizon {horizon}",
                self.id
            ));
        }
        Ok((
            DMatrix::from_row_slice(rows, nf, &feats),
            DMatrix::from_row_slice(rows, horizon, &targets),
        ))
    }

    fn direct(&self, window: &[f64], head: &Tensor) -> Result<Vec<f64>> {
        let f = self.features(window)?;
        let (nf, h) = head.dims2()?;
        let mut out = vec![0.0; h];
        for (i, fi) in f.iter().enumerate().take(nf) {
            out.iter_mut().zip(head.row(i)).for_each(|(o, w)| *o += fi * w);
        }
        Ok(out)
    }

    pub fn card(&self, probe: &ProbeConfig) -> Result<ModelCard> {
        Ok(ModelCard {
            format_version: crate::model_encoder::CARD_FORMAT_VERSION,
            id: self.id.clone(),
            architecture: self.meta.architecture,
            param_count: self.meta.param_count,
            gmacs: self.meta.gmacs,
            hidden_dim: self.meta.hidden_dim,
            pretrain_domains: self.meta.pretrain_domains.clone(),
            dag: self.dag.clone(),
            probe_signature: Some(probe_signature(self, probe)?),
        })
    }
}

impl Forecaster for SyntheticModel {
    /// Pre-trained forecast: one-step recursion for AR models, direct heads
    /// (recursing in blocks past their width) otherwise.
    fn forecast(&self, window: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let head = self.params.get(HEAD)?;
        let step = head.shape()[1];
        let mut ctx = window.to_vec();
        let mut out = Vec::with_capacity(horizon);
        while out.len() < horizon {
            let y = self.direct(&ctx, head)?;
            let take = step.min(horizon - out.len());
            out.extend_from_slice(&y[..take]);
            ctx.extend_from_slice(&y[..take]);
        }
        Ok(out)
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn family_dag(spec: &FamilySpec) -> DagGraph {
    match spec {
        FamilySpec::LinearAr { .. } => DagGraph::chain(&["input", "window_slice", "linear", "autoregress", "output"]),
        FamilySpec::WindowedMlp { .. } => {
            DagGraph::chain(&["input", "window_slice", "linear", "tanh", "linear", "output"])
        }
        FamilySpec::SeasonalMean { .. } => DagGraph::chain(&["input", "window_slice", "fold_cycles", "mean", "linear", "output"])
            .node("skip", "level")
            .edge("n1", "skip")
            .edge("skip", "n4"),
    }
}

fn domains(tags: &[&str]) -> BTreeSet<String> {
    tags.iter().map(|s| s.to_string()).collect()
}

/// The standard eight-model synthetic hub; larger hubs cycle the templates
/// with fresh weights.
pub fn synthetic_hub(k: usize, seed: u64) -> Result<Vec<SyntheticModel>> {
    use Architecture::*;
    let templates: [(&str, FamilySpec, Architecture, &[&str]); 8] = [
        ("ar-2", FamilySpec::LinearAr { order: 2 }, DecoderOnly, &["economic"]),
        ("ar-24", FamilySpec::LinearAr { order: 24 }, DecoderOnly, &["electricity", "traffic"]),
        ("ar-96", FamilySpec::LinearAr { order: 96 }, EncoderDecoder, &["general"]),
        ("seasonal-24x4", FamilySpec::SeasonalMean { period: 24, cycles: 4 }, EncoderDecoder, &["electricity", "energy"]),
        ("seasonal-12x8", FamilySpec::SeasonalMean { period: 12, cycles: 8 }, EncoderDecoder, &["environment", "nature"]),
        ("seasonal-7x12", FamilySpec::SeasonalMean { period: 7, cycles: 12 }, EncoderOnly, &["traffic", "economic"]),
        ("mlp-48x16", FamilySpec::WindowedMlp { window: 48, hidden: 16 }, EncoderOnly, &["general"]),
        ("mlp-96x64", FamilySpec::WindowedMlp { window: 96, hidden: 64 }, EncoderOnly, &["general", "energy"]),
    ];
    (0..k)
        .map(|i| {
            let (name, spec, arch, tags) = templates[i % templates.len()];
            let id = if i < templates.len() {
                name.to_string()
            } else {
                format!("{name}-v{}", i / templates.len())
            };
            let (params, macs, hidden) = match spec {
                FamilySpec::LinearAr { order } => (order + 1, order, order),
                FamilySpec::WindowedMlp { window, hidden } => (
                    window * hidden + hidden + (hidden + 1) * PRETRAIN_HORIZON,
                    window * hidden + hidden * PRETRAIN_HORIZON,
                    hidden,
                ),
                FamilySpec::SeasonalMean { period, cycles } => {
                    ((period + 1) * PRETRAIN_HORIZON, period * cycles + period * PRETRAIN_HORIZON, period)
                }
            };
            let meta = ModelMeta {
                architecture: arch,
                param_count: params as u64,
                gmacs: macs as f64 * 1e-9,
                hidden_dim: hidden as u64,
                pretrain_domains: domains(tags),
            };
            SyntheticModel::new(id, spec, meta, seed)
        })
        .collect()
}
