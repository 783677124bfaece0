//! Compatibility head: patchwise cross-attention from model embeddings to
//! the data embedding, then a horizon-routed mixture of expert MLPs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::numerics::{init_weight, Activation, Graph, MlpSpec, ParamStore, ParamVars, Tensor, Var};
use crate::rng::Rng;

pub const CA_Q: &str = "scorer.ca.w_q";
pub const CA_K: &str = "scorer.ca.w_k";
pub const CA_V: &str = "scorer.ca.w_v";
pub const ROUTER: &str = "scorer.router";

/// Longest horizon of the standard grid; the router's features are scaled by it.
pub const HORIZON_SCALE: f64 = 720.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    /// Number of experts `G`.
    pub n_experts: usize,
    pub router_hidden: usize,
    pub expert_hidden: usize,
    pub router_activation: Activation,
    pub expert_activation: Activation,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            n_experts: 4,
            router_hidden: 16,
            expert_hidden: 128,
            router_activation: Activation::Gelu,
            expert_activation: Activation::Relu,
        }
    }
}

impl ScorerConfig {
    pub fn router(&self) -> MlpSpec {
        MlpSpec::new(ROUTER, vec![2, self.router_hidden, self.n_experts], self.router_activation)
    }

    pub fn expert(&self, g: usize, d_model: usize) -> MlpSpec {
        MlpSpec::new(format!("scorer.expert{g}"), vec![d_model, self.expert_hidden, 1], self.expert_activation)
    }
}

pub fn init_scorer(store: &mut ParamStore, cfg: &ScorerConfig, d_model: usize, rng: &mut Rng) -> Result<()> {
    if cfg.n_experts == 0 {
        return Err(invalid!("the mixture needs at least one expert"));
    }
    for name in [CA_Q, CA_K, CA_V] {
        store.insert(name, init_weight(d_model, d_model, rng))?;
    }
    cfg.router().init(store, rng)?;
    for g in 0..cfg.n_experts {
        cfg.expert(g, d_model).init(store, rng)?;
    }
    Ok(())
}

/// `[H/720, ln H / ln 720]`.
pub fn horizon_features(h: usize) -> Result<Tensor> {
    if h == 0 {
        return Err(invalid!("horizon must be at least 1"));
    }
    let h = h as f64;
    Tensor::new(vec![1, 2], vec![h / HORIZON_SCALE, h.ln() / HORIZON_SCALE.ln()])
}

/// Variables of one scoring pass.
#[derive(Clone, Copy, Debug)]
pub struct ScoreVars {
    /// `r̂` as a `[K×1]` column.
    pub scores: Var,
    /// Expert weights `[1×G]`.
    pub weights: Var,
    /// Cross-attention matrix `[K×P]`.
    pub attention: Var,
}

/// `scaled_dot_attention(E_m·W_Q, E_d·W_K, E_d·W_V)`; returns `(E_ca, A)`.
pub fn cross_attention_graph(g: &mut Graph, vars: &ParamVars, e_m: Var, e_d: Var) -> Result<(Var, Var)> {
    let (dm, dd) = (g.value(e_m).dims2()?.1, g.value(e_d).dims2()?.1);
    if dm != dd {
        return Err(shape_err!("model embeddings are {dm} wide, data embedding is {dd} wide"));
    }
    let q = g.matmul(e_m, vars.get(CA_Q)?)?;
    let k = g.matmul(e_d, vars.get(CA_K)?)?;
    let v = g.matmul(e_d, vars.get(CA_V)?)?;
    g.attention(q, k, v)
}

/// Softmax-normalized expert weights for horizon `h`, as `[1×G]`.
pub fn router_graph(g: &mut Graph, vars: &ParamVars, h: usize, cfg: &ScorerConfig) -> Result<Var> {
    let x = g.constant(horizon_features(h)?);
    let logits = cfg.router().forward(g, vars, x)?;
    g.softmax(logits, 1)
}

/// `r̂ = Σ_g w_g · MLP_g(E_ca)` as a `[K×1]` column.
pub fn expert_scores_graph(g: &mut Graph, vars: &ParamVars, e_ca: Var, w: Var, cfg: &ScorerConfig) -> Result<Var> {
    let d = g.value(e_ca).dims2()?.1;
    let n_w = g.value(w).len();
    if n_w != cfg.n_experts {
        return Err(shape_err!("{n_w} expert weights for {} experts", cfg.n_experts));
    }
    let outs = (0..cfg.n_experts)
        .map(|i| cfg.expert(i, d).forward(g, vars, e_ca))
        .collect::<Result<Vec<_>>>()?;
    let stacked = g.concat_cols(&outs)?;
    let wt = g.transpose(w)?;
    g.matmul(stacked, wt)
}

pub fn score_graph(g: &mut Graph, vars: &ParamVars, e_m: Var, e_d: Var, h: usize, cfg: &ScorerConfig) -> Result<ScoreVars> {
    let (e_ca, attention) = cross_attention_graph(g, vars, e_m, e_d)?;
    let weights = router_graph(g, vars, h, cfg)?;
    let scores = expert_scores_graph(g, vars, e_ca, weights, cfg)?;
    Ok(ScoreVars {
        scores,
        weights,
        attention,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub scores: Vec<f64>,
    pub expert_weights: Vec<f64>,
    /// `[K×P]` cross-attention weights.
    pub attention: Tensor,
}

impl ScoreResult {
    pub fn from_graph(g: &Graph, v: &ScoreVars) -> Self {
        ScoreResult {
            scores: g.value(v.scores).data().to_vec(),
            expert_weights: g.value(v.weights).data().to_vec(),
            attention: g.value(v.attention).clone(),
        }
    }

    /// One row per model: `model_id,p0,p1,...`.
    pub fn write_attention_csv(&self, path: &Path, model_ids: &[String]) -> Result<()> {
        let (k, p) = self.attention.dims2()?;
        if model_ids.len() != k {
            return Err(invalid!("{} ids for {k} attention rows", model_ids.len()));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["model_id".to_string()];
        header.extend((0..p).map(|j| format!("patch_{j}")));
        w.write_record(&header)?;
        for (i, id) in model_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.attention.row(i).iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_weights_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["expert", "weight"])?;
        for (i, v) in self.expert_weights.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:.17e}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Forward-only scoring of fixed embeddings `E_m [K×d]`, `E_d [P×d]`.
pub fn score_hub(e_m: &Tensor, e_d: &Tensor, h: usize, params: &ParamStore, cfg: &ScorerConfig) -> Result<ScoreResult> {
    let mut g = Graph::new();
    let vars = params.subset("scorer.").bind(&mut g);
    let (m, d) = (g.constant(e_m.clone()), g.constant(e_d.clone()));
    let v = score_graph(&mut g, &vars, m, d, h, cfg)?;
    Ok(ScoreResult::from_graph(&g, &v))
}

pub fn router_weights(h: usize, params: &ParamStore, cfg: &ScorerConfig) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars = params.subset(ROUTER).bind(&mut g);
    let w = router_graph(&mut g, &vars, h, cfg)?;
    Ok(g.value(w).data().to_vec())
}
