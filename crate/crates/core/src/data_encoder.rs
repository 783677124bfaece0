//! Temporal-aware data encoder: sampled univariate windows are patched,
//! projected, position-encoded and passed through one self-attention layer;
//! mean pooling over the windows gives `E_d ∈ R^{P×d}`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::meta_dataset::TimeSeriesDataset;
use crate::numerics::{init_weight, Graph, ParamStore, ParamVars, Tensor, Var};
use crate::rng::Rng;

pub const PATCH_W: &str = "data_enc.patch.weight";
pub const PATCH_B: &str = "data_enc.patch.bias";
pub const SA_Q: &str = "data_enc.sa.w_q";
pub const SA_K: &str = "data_enc.sa.w_k";
pub const SA_V: &str = "data_enc.sa.w_v";

const SD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Look-back window length `L`.
    pub lookback: usize,
    /// Patch size `S`.
    pub patch: usize,
    /// Embedding width `d`.
    pub d_model: usize,
    /// Windows per subset `B`.
    pub subset: usize,
    /// Subsets averaged at inference `M`.
    pub resamples: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            lookback: 96,
            patch: 16,
            d_model: 64,
            subset: 32,
            resamples: 8,
        }
    }
}

impl EncoderConfig {
    pub fn n_patches(&self) -> usize {
        self.lookback / self.patch.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.lookback == 0 || self.subset == 0 || self.resamples == 0 {
            return Err(invalid!("encoder sizes must be positive: {self:?}"));
        }
        if self.patch > self.lookback {
            return Err(invalid!("patch size {} exceeds look-back {}", self.patch, self.lookback));
        }
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return Err(invalid!("embedding width must be even and positive, got {}", self.d_model));
        }
        Ok(())
    }
}

/// Draw `b` windows of length `l` uniformly over (channel, start) pairs of
/// the training split, each z-normalized.
pub fn sample_subset(dataset: &TimeSeriesDataset, l: usize, b: usize, rng: &mut Rng) -> Result<Tensor> {
    if l == 0 || b == 0 {
        return Err(invalid!("window length and subset size must be positive"));
    }
    let counts: Vec<usize> = (0..dataset.n_channels())
        .map(|c| (dataset.train(c).len() + 1).saturating_sub(l))
        .collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(invalid!(
            "dataset `{}` has no channel with {l} training points",
            dataset.id
        ));
    }
    let mut data = Vec::with_capacity(b * l);
    for _ in 0..b {
        let mut pos = rng.random_range(0..total);
        let mut c = 0;
        while pos >= counts[c] {
            pos -= counts[c];
            c += 1;
        }
        data.extend(z_normalize(&dataset.train(c)[pos..pos + l]));
    }
    Tensor::new(vec![b, l], data)
}

/// `(x - mean) / max(sd, 1e-8)` with population standard deviation.
pub fn z_normalize(x: &[f64]) -> Vec<f64> {
    let (mean, sd) = crate::meta_dataset::mean_std(x);
    let sd = sd.max(SD_FLOOR);
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// `[B×L] -> [B×P×S]`, dropping the trailing `L mod S` points.
pub fn patchify(x: &Tensor, s: usize) -> Result<Tensor> {
    let (b, l) = x.dims2()?;
    if s == 0 || s > l {
        return Err(invalid!("patch size {s} does not fit windows of length {l}"));
    }
    let p = l / s;
    let mut out = Vec::with_capacity(b * p * s);
    for i in 0..b {
        out.extend_from_slice(&x.row(i)[..p * s]);
    }
    Tensor::new(vec![b, p, s], out)
}

/// Sinusoidal table: `PE[p,2i] = sin(p/10000^{2i/d})`, `PE[p,2i+1] = cos(·)`.
pub fn positional_encoding(p: usize, d: usize) -> Result<Tensor> {
    if p == 0 || d == 0 || d % 2 != 0 {
        return Err(invalid!("positional encoding needs P > 0 and even d > 0, got {p}x{d}"));
    }
    let mut out = vec![0.0; p * d];
    for pos in 0..p {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out[pos * d + 2 * i] = angle.sin();
            out[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![p, d], out)
}

pub fn init_data_encoder(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut Rng) -> Result<()> {
    cfg.validate()?;
    let d = cfg.d_model;
    store.insert(PATCH_W, init_weight(cfg.patch, d, rng))?;
    store.insert(PATCH_B, Tensor::zeros(&[d]))?;
    for name in [SA_Q, SA_K, SA_V] {
        store.insert(name, init_weight(d, d, rng))?;
    }
    Ok(())
}

fn check_params(g: &Graph, vars: &ParamVars, cfg: &EncoderConfig) -> Result<()> {
    let d = cfg.d_model;
    let expect = [(PATCH_W, vec![cfg.patch, d]), (SA_Q, vec![d, d]), (SA_K, vec![d, d]), (SA_V, vec![d, d])];
    for (name, shape) in expect {
        let got = g.value(vars.get(name)?).shape();
        if got != shape.as_slice() {
            return Err(shape_err!("`{name}` has shape {got:?}, config needs {shape:?}"));
        }
    }
    Ok(())
}

/// Self-attended patch embeddings `E_sa [P×d]` of every window, in order.
pub fn encode_windows_graph(g: &mut Graph, vars: &ParamVars, subset: &Tensor, cfg: &EncoderConfig) -> Result<Vec<Var>> {
    cfg.validate()?;
    check_params(g, vars, cfg)?;
    let (b, l) = subset.dims2()?;
    if l != cfg.lookback {
        return Err(shape_err!("windows have length {l}, config look-back is {}", cfg.lookback));
    }
    let patches = patchify(subset, cfg.patch)?;
    let (p, s) = (cfg.n_patches(), cfg.patch);
    let pe = g.constant(positional_encoding(p, cfg.d_model)?);
    let (w_p, b_p) = (vars.get(PATCH_W)?, vars.get(PATCH_B)?);
    let (w_q, w_k, w_v) = (vars.get(SA_Q)?, vars.get(SA_K)?, vars.get(SA_V)?);
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let x = Tensor::new(vec![p, s], patches.data()[i * p * s..(i + 1) * p * s].to_vec())?;
        let x = g.constant(x);
        let e = g.matmul(x, w_p)?;
        let e = g.add_bias(e, b_p)?;
        let e = g.add(e, pe)?;
        let q = g.matmul(e, w_q)?;
        let k = g.matmul(e, w_k)?;
        let v = g.matmul(e, w_v)?;
        out.push(g.attention(q, k, v)?.0);
    }
    Ok(out)
}

/// `E_d`: the mean of the windows' `E_sa`, independent of window order.
pub fn encode_data_graph(g: &mut Graph, vars: &ParamVars, subset: &Tensor, cfg: &EncoderConfig) -> Result<Var> {
    let per_window = encode_windows_graph(g, vars, subset, cfg)?;
    g.mean_of(&per_window)
}

pub fn encode_data(subset: &Tensor, params: &ParamStore, cfg: &EncoderConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars = params.subset("data_enc.").bind(&mut g);
    let e_d = encode_data_graph(&mut g, &vars, subset, cfg)?;
    Ok(g.value(e_d).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_dataset::SplitRatio;
    use crate::rng::seeded;

    #[test]
    fn patch_counts() {
        let x = Tensor::new(vec![1, 96], (0..96).map(f64::from).collect()).unwrap();
        assert_eq!(patchify(&x, 16).unwrap().shape(), &[1, 6, 16]);
        let x = Tensor::new(vec![2, 100], (0..200).map(f64::from).collect()).unwrap();
        let p = patchify(&x, 16).unwrap();
        assert_eq!(p.shape(), &[2, 6, 16]);
        assert_eq!(p.data()[96], 100.0);
    }

    #[test]
    fn patches_concatenate_back() {
        let x = Tensor::new(vec![3, 48], (0..144).map(|v| f64::from(v).sin()).collect()).unwrap();
        assert_eq!(patchify(&x, 16).unwrap().data(), x.data());
    }

    #[test]
    fn positional_rows() {
        let pe = positional_encoding(6, 64).unwrap();
        for (j, v) in pe.row(0).iter().enumerate() {
            assert_eq!(*v, if j % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.at(1, 0) - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(positional_encoding(6, 7).is_err());
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let d = TimeSeriesDataset::from_columns("c", "x", "x", vec![vec![3.0; 200]], SplitRatio::new(1, 0, 0)).unwrap();
        let s = sample_subset(&d, 96, 4, &mut seeded(0)).unwrap();
        assert!(s.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_window_dataset() {
        let vals: Vec<f64> = (0..96).map(|t| (t as f64 * 0.3).sin() * 5.0 + 2.0).collect();
        let d = TimeSeriesDataset::from_columns("w", "x", "x", vec![vals.clone()], SplitRatio::new(1, 0, 0)).unwrap();
        let s = sample_subset(&d, 96, 1, &mut seeded(9)).unwrap();
        assert_eq!(s.data(), z_normalize(&vals).as_slice());
        let short = TimeSeriesDataset::from_columns("s", "x", "x", vec![vals], SplitRatio::new(1, 1, 0)).unwrap();
        assert!(sample_subset(&short, 96, 1, &mut seeded(9)).is_err());
    }
}
