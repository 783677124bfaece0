//! The full scorer: model encoder, data encoder and compatibility head
//! sharing one parameter store.

use serde::{Deserialize, Serialize};

use crate::data_encoder::{encode_data_graph, init_data_encoder, sample_subset, EncoderConfig};
use crate::error::{invalid, Result};
use crate::meta_dataset::TimeSeriesDataset;
use crate::model_encoder::{encode_hub_graph, init_model_encoder, HubFeatures, ModelEncoderConfig};
use crate::numerics::{Graph, ParamStore, ParamVars, Tensor, Var};
use crate::rng::{seeded, stable_hash, Rng};
use crate::scorer::{init_scorer, score_graph, ScoreResult, ScoreVars, ScorerConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    pub encoder: EncoderConfig,
    pub model_encoder: ModelEncoderConfig,
    pub scorer: ScorerConfig,
}

impl SelectorConfig {
    pub fn d_model(&self) -> usize {
        self.encoder.d_model
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.scorer.n_experts == 0 {
            return Err(invalid!("the mixture needs at least one expert"));
        }
        Ok(())
    }
}

pub fn init_selector(cfg: &SelectorConfig, rng: &mut Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    init_model_encoder(&mut store, &cfg.model_encoder, cfg.d_model(), rng)?;
    init_data_encoder(&mut store, &cfg.encoder, rng)?;
    init_scorer(&mut store, &cfg.scorer, cfg.d_model(), rng)?;
    Ok(store)
}

/// Data embedding averaged over several subsets (a single subset is used as is).
pub fn data_embedding_graph(g: &mut Graph, vars: &ParamVars, subsets: &[Tensor], cfg: &SelectorConfig) -> Result<Var> {
    let parts = subsets
        .iter()
        .map(|s| encode_data_graph(g, vars, s, &cfg.encoder))
        .collect::<Result<Vec<_>>>()?;
    match parts.as_slice() {
        [] => Err(invalid!("no data subsets to encode")),
        [one] => Ok(*one),
        many => g.mean_of(many),
    }
}

/// Record the whole scoring pass for horizon `h` on `g`.
pub fn forward_graph(
    g: &mut Graph,
    vars: &ParamVars,
    cfg: &SelectorConfig,
    hub: &HubFeatures,
    subsets: &[Tensor],
    h: usize,
) -> Result<ScoreVars> {
    let e_m = encode_hub_graph(g, vars, hub)?;
    let e_d = data_embedding_graph(g, vars, subsets, cfg)?;
    score_graph(g, vars, e_m, e_d, h, &cfg.scorer)
}

pub fn predict(
    params: &ParamStore,
    cfg: &SelectorConfig,
    hub: &HubFeatures,
    subsets: &[Tensor],
    h: usize,
) -> Result<ScoreResult> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let v = forward_graph(&mut g, &vars, cfg, hub, subsets, h)?;
    Ok(ScoreResult::from_graph(&g, &v))
}

/// The subset used for one training evaluation of `(dataset, h)` under
/// `step_seed`.
pub fn training_subset(dataset: &TimeSeriesDataset, h: usize, step_seed: u64, cfg: &EncoderConfig) -> Result<Tensor> {
    let mut rng = seeded(stable_hash(step_seed, &format!("{}@{h}", dataset.id)));
    sample_subset(dataset, cfg.lookback, cfg.subset, &mut rng)
}

/// The `M` inference subsets of a dataset; they depend only on the seed
/// and the dataset id.
pub fn inference_subsets(dataset: &TimeSeriesDataset, seed: u64, cfg: &EncoderConfig) -> Result<Vec<Tensor>> {
    (0..cfg.resamples)
        .map(|m| {
            let mut rng = seeded(stable_hash(seed, &format!("{}#{m}", dataset.id)));
            sample_subset(dataset, cfg.lookback, cfg.subset, &mut rng)
        })
        .collect()
}
