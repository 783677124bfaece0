//! Joint loss, first-order meta-learning, the training loop and inference.

mod loss;
mod meta;
mod run;
pub mod sine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use loss::{total_loss, total_loss_graph, LossOrientation};
pub use meta::{erm_step, inner_adapt, mean_loss_grad, meta_gradient, meta_step, MetaTask};
pub use run::{
    evaluate, hub_features_for, predict_horizons, rank_models, train, EpochLog, RankOutput, TrainInputs,
    TrainOutcome, TrainReport,
};

use crate::error::{invalid, Result};
use crate::meta_dataset::{MetaSample, TimeSeriesDataset};
use crate::model_encoder::HubFeatures;
use crate::numerics::{Dtype, Graph, Grads, ParamStore};
use crate::selector::{forward_graph, training_subset, SelectorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    /// Tasks per meta-batch.
    pub n_tasks: usize,
    pub support_size: usize,
    pub query_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub meta_learning: bool,
    pub loss_orientation: LossOrientation,
    /// Parameters are rounded to this precision after every update.
    pub precision: Dtype,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.7,
            inner_lr: 0.001,
            outer_lr: 0.005,
            inner_steps: 1,
            n_tasks: 4,
            support_size: 4,
            query_size: 4,
            epochs: 80,
            batch_size: 16,
            seed: 0,
            meta_learning: true,
            loss_orientation: LossOrientation::PredictionWeighted,
            precision: Dtype::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.inner_lr > 0.0 && self.outer_lr > 0.0) {
            return Err(invalid!("learning rates must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.n_tasks == 0 {
            return Err(invalid!("epochs, batch size and tasks per batch must be positive"));
        }
        if self.support_size == 0 || self.query_size == 0 {
            return Err(invalid!("support and query sizes must be positive"));
        }
        Ok(())
    }
}

/// A meta-sample paired with the seed of the data subset it is scored on.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub sample: MetaSample,
    pub seed: u64,
}

/// Per-sample loss of the full scorer.
pub struct Objective<'a> {
    pub selector: &'a SelectorConfig,
    pub hub: &'a HubFeatures,
    pub datasets: &'a BTreeMap<String, TimeSeriesDataset>,
    pub lambda: f64,
    pub orientation: LossOrientation,
}

impl Objective<'_> {
    fn dataset(&self, id: &str) -> Result<&TimeSeriesDataset> {
        self.datasets
            .get(id)
            .ok_or_else(|| invalid!("meta-sample refers to unknown dataset `{id}`"))
    }

    pub fn loss_grad(&self, params: &ParamStore, draw: &Draw) -> Result<(f64, Grads)> {
        let s = &draw.sample;
        let subset = training_subset(self.dataset(&s.dataset_id)?, s.horizon, draw.seed, &self.selector.encoder)?;
        let mut g = Graph::new();
        let vars = params.bind(&mut g);
        let out = forward_graph(&mut g, &vars, self.selector, self.hub, &[subset], s.horizon)?;
        let loss = total_loss_graph(&mut g, out.scores, &s.scores, self.lambda, self.orientation)?;
        g.backward(loss)?;
        Ok((g.value(loss).item()?, vars.grads(&g)))
    }
}
