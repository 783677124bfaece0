//! Knowledge-infused model encoder: meta-information, topology and
//! functional embeddings fused by a learned projection.

mod card;
mod dag;
mod functional;

pub use card::{Architecture, ModelCard, CARD_FORMAT_VERSION, DOMAIN_VOCABULARY};
pub use dag::{wl_topo_embedding, DagGraph, DagNode};
pub use functional::{probe_batch, probe_signature, project_signature, Forecaster, ProbeConfig};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{normal_tensor, Graph, ParamStore, ParamVars, Tensor, Var};
use crate::rng::Rng;

pub const W_M: &str = "model_enc.w_m";

/// Offset and count of the continuous meta features.
const META_CONTINUOUS: std::ops::Range<usize> = 3..6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEncoderConfig {
    pub meta_dim: usize,
    pub topo_dim: usize,
    pub wl_iterations: usize,
    pub probe: ProbeConfig,
}

impl Default for ModelEncoderConfig {
    fn default() -> Self {
        ModelEncoderConfig {
            meta_dim: 16,
            topo_dim: 32,
            wl_iterations: 3,
            probe: ProbeConfig::default(),
        }
    }
}

impl ModelEncoderConfig {
    pub fn func_dim(&self) -> usize {
        self.probe.dim
    }

    pub fn input_dim(&self) -> usize {
        self.meta_dim + self.topo_dim + self.func_dim()
    }
}

/// Raw meta-information vector: architecture one-hot, log10 parameter count,
/// log10 GMACs, log2 hidden size, then the domain multi-hot; padded or
/// truncated to `dim`.
pub fn meta_embedding(card: &ModelCard, dim: usize) -> Result<Vec<f64>> {
    card.validate()?;
    let mut v = card.architecture.one_hot().to_vec();
    v.push((card.param_count as f64).log10());
    v.push(card.gmacs.log10());
    v.push((card.hidden_dim as f64).log2());
    v.extend(
        DOMAIN_VOCABULARY
            .iter()
            .map(|d| if card.pretrain_domains.contains(*d) { 1.0 } else { 0.0 }),
    );
    v.resize(dim, 0.0);
    Ok(v)
}

/// Column statistics used to z-normalize features across the hub.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubNormalization {
    pub meta_mean: Vec<f64>,
    pub meta_std: Vec<f64>,
    pub func_mean: Vec<f64>,
    pub func_std: Vec<f64>,
}

// Sorted summation makes the statistics independent of hub order.
fn column_stats(rows: &[Vec<f64>], cols: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let sorted_sum = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        xs.iter().sum::<f64>()
    };
    cols.map(|c| {
        let mean = sorted_sum(rows.iter().map(|r| r[c]).collect()) / n;
        let var = sorted_sum(rows.iter().map(|r| (r[c] - mean).powi(2)).collect()) / n;
        (mean, var.sqrt())
    })
    .unzip()
}

fn zscore(x: f64, mean: f64, std: f64) -> f64 {
    if std > 1e-12 {
        (x - mean) / std
    } else {
        0.0
    }
}

/// Fixed (non-learned) per-model inputs to the model encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct HubFeatures {
    pub ids: Vec<String>,
    pub v_a: Tensor,
    pub v_t: Tensor,
    pub v_c: Tensor,
    pub normalization: HubNormalization,
}

struct RawHub {
    meta: Vec<Vec<f64>>,
    topo: Vec<Vec<f64>>,
    func: Vec<Vec<f64>>,
}

fn raw_hub(cards: &[ModelCard], cfg: &ModelEncoderConfig) -> Result<RawHub> {
    if cards.is_empty() {
        return Err(invalid!("model hub is empty"));
    }
    let mut raw = RawHub {
        meta: Vec::new(),
        topo: Vec::new(),
        func: Vec::new(),
    };
    for card in cards {
        raw.meta.push(meta_embedding(card, cfg.meta_dim)?);
        raw.topo.push(wl_topo_embedding(&card.dag, cfg.wl_iterations, cfg.topo_dim)?);
        raw.func.push(functional_embedding(card, &cfg.probe)?);
    }
    Ok(raw)
}

/// Pre-normalization functional embedding of a card's probe signature.
pub fn functional_embedding(card: &ModelCard, cfg: &ProbeConfig) -> Result<Vec<f64>> {
    let sig = card
        .probe_signature
        .as_ref()
        .ok_or_else(|| invalid!("card `{}` carries no probe signature", card.id))?;
    Ok(project_signature(sig, cfg))
}

impl HubFeatures {
    /// Embed every card and z-normalize continuous features across the hub.
    pub fn from_cards(cards: &[ModelCard], cfg: &ModelEncoderConfig) -> Result<Self> {
        let raw = raw_hub(cards, cfg)?;
        let cont = META_CONTINUOUS.start..META_CONTINUOUS.end.min(cfg.meta_dim);
        let (meta_mean, meta_std) = column_stats(&raw.meta, cont);
        let (func_mean, func_std) = column_stats(&raw.func, 0..cfg.func_dim());
        let norm = HubNormalization {
            meta_mean,
            meta_std,
            func_mean,
            func_std,
        };
        Self::assemble(cards, raw, norm)
    }

    /// Embed cards with previously fitted normalization statistics.
    pub fn with_normalization(
        cards: &[ModelCard],
        cfg: &ModelEncoderConfig,
        norm: &HubNormalization,
    ) -> Result<Self> {
        let raw = raw_hub(cards, cfg)?;
        Self::assemble(cards, raw, norm.clone())
    }

    fn assemble(cards: &[ModelCard], mut raw: RawHub, norm: HubNormalization) -> Result<Self> {
        for row in raw.meta.iter_mut() {
            for (j, c) in META_CONTINUOUS.enumerate().take(norm.meta_mean.len()) {
                row[c] = zscore(row[c], norm.meta_mean[j], norm.meta_std[j]);
            }
        }
        for row in raw.func.iter_mut() {
            if row.len() != norm.func_mean.len() {
                return Err(shape_err!("functional width {} vs normalization {}", row.len(), norm.func_mean.len()));
            }
            for (c, x) in row.iter_mut().enumerate() {
                *x = zscore(*x, norm.func_mean[c], norm.func_std[c]);
            }
        }
        Ok(HubFeatures {
            ids: cards.iter().map(|c| c.id.clone()).collect(),
            v_a: Tensor::from_rows(&raw.meta)?,
            v_t: Tensor::from_rows(&raw.topo)?,
            v_c: Tensor::from_rows(&raw.func)?,
            normalization: norm,
        })
    }

    pub fn k(&self) -> usize {
        self.ids.len()
    }

    /// `[v_a, v_t, v_c]` as one `K × (d_a + d_t + d_c)` matrix.
    pub fn concat(&self) -> Tensor {
        let rows: Vec<Vec<f64>> = (0..self.k())
            .map(|i| {
                let mut r = self.v_a.row(i).to_vec();
                r.extend_from_slice(self.v_t.row(i));
                r.extend_from_slice(self.v_c.row(i));
                r
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    /// Reorder models; `order[i]` is the source row of output row `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let pick = |t: &Tensor| Tensor::from_rows(&order.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>());
        Ok(HubFeatures {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            v_a: pick(&self.v_a)?,
            v_t: pick(&self.v_t)?,
            v_c: pick(&self.v_c)?,
            normalization: self.normalization.clone(),
        })
    }
}

/// Model embeddings and the components they were fused from.
#[derive(Clone, Debug, PartialEq)]
pub struct HubEmbedding {
    pub e_m: Tensor,
    pub v_a: Tensor,
    pub v_t: Tensor,
    pub v_c: Tensor,
}

pub fn init_model_encoder(store: &mut ParamStore, cfg: &ModelEncoderConfig, d_model: usize, rng: &mut Rng) -> Result<()> {
    // Stored as [d × (d_a+d_t+d_c)] and applied transposed.
    let fan_in = cfg.input_dim();
    store.insert(W_M, normal_tensor(&[d_model, fan_in], 1.0 / (fan_in as f64).sqrt(), rng))
}

/// `E_m = relu([v_a, v_t, v_c] · W_mᵀ)` on `g`.
pub fn encode_hub_graph(g: &mut Graph, vars: &ParamVars, features: &HubFeatures) -> Result<Var> {
    let x = g.constant(features.concat());
    let w = vars.get(W_M)?;
    let width = g.value(x).shape()[1];
    if g.value(w).shape().get(1) != Some(&width) {
        return Err(shape_err!(
            "W_m has shape {:?} but hub features are {width} wide",
            g.value(w).shape()
        ));
    }
    let wt = g.transpose(w)?;
    let h = g.matmul(x, wt)?;
    Ok(g.relu(h))
}

pub fn encode_hub(features: &HubFeatures, params: &ParamStore) -> Result<HubEmbedding> {
    let mut g = Graph::new();
    let vars = params.subset("model_enc.").bind(&mut g);
    let e_m = encode_hub_graph(&mut g, &vars, features)?;
    Ok(HubEmbedding {
        e_m: g.value(e_m).clone(),
        v_a: features.v_a.clone(),
        v_t: features.v_t.clone(),
        v_c: features.v_c.clone(),
    })
}
