use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::meta_dataset::{sample_tasks, MetaDataset, Task, TaskStrategy, TimeSeriesDataset};
use crate::metrics::{ranking_from_scores, EvalReport};
use crate::model_encoder::{encode_hub_graph, HubFeatures, HubNormalization, ModelCard};
use crate::numerics::{AdamState, Checkpoint, Dtype, Graph, ParamStore, Tensor};
use crate::rng::{substream, substream_seed, Rng};
use crate::scorer::{score_graph, ScoreResult};
use crate::selector::{data_embedding_graph, inference_subsets, init_selector, predict, SelectorConfig};
use crate::trainer::{erm_step, meta_step, total_loss, Draw, MetaTask, Objective, TrainConfig};

pub struct TrainInputs<'a> {
    pub train: &'a MetaDataset,
    pub val: &'a MetaDataset,
    pub datasets: &'a BTreeMap<String, TimeSeriesDataset>,
    pub hub: &'a HubFeatures,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_tau_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Validation τ_ω of the kept checkpoint.
    pub final_val_tau_w: f64,
    pub steps: usize,
    pub wall_clock_seconds: f64,
    pub checkpoint_path: Option<String>,
}

pub struct TrainOutcome {
    /// Best-validation parameters.
    pub params: ParamStore,
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

fn draws(samples: &[crate::meta_dataset::MetaSample], seed: u64) -> Vec<Draw> {
    samples
        .iter()
        .map(|s| Draw {
            sample: s.clone(),
            seed,
        })
        .collect()
}

fn sample_batch(meta: &MetaDataset, step: usize, cfg: &TrainConfig, rng: &mut Rng) -> Result<Vec<Task>> {
    let preferred = TaskStrategy::for_batch(step);
    match sample_tasks(meta, preferred, cfg.n_tasks, cfg.support_size, cfg.query_size, rng) {
        Ok(t) => Ok(t),
        Err(first) => {
            let other = TaskStrategy::for_batch(step + 1);
            log::warn!("{first}; falling back to {other:?} sampling");
            sample_tasks(meta, other, cfg.n_tasks, cfg.support_size, cfg.query_size, rng)
                .map_err(|e| invalid!("no task can be sampled from the training split: {e}"))
        }
    }
}

fn check_hub(meta: &MetaDataset, hub: &HubFeatures, what: &str) -> Result<()> {
    if meta.hub != hub.ids {
        return Err(invalid!(
            "{what} meta-dataset is scored over hub {:?} but the embedded hub is {:?}",
            meta.hub,
            hub.ids
        ));
    }
    Ok(())
}

/// Meta-train (or, with `meta_learning = false`, mini-batch train) the
/// scorer, keeping the parameters with the best validation τ_ω.
pub fn train(inputs: &TrainInputs, selector: &SelectorConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    selector.validate()?;
    check_hub(inputs.train, inputs.hub, "training")?;
    check_hub(inputs.val, inputs.hub, "validation")?;
    if inputs.train.is_empty() || inputs.val.is_empty() {
        return Err(invalid!("training and validation splits must both be non-empty"));
    }
    let mut params = init_selector(selector, &mut substream(cfg.seed, "init"))?;
    let round = |p: &mut ParamStore| {
        if cfg.precision == Dtype::F32 {
            p.round_to_f32();
        }
    };
    round(&mut params);
    let mut adam = AdamState::default();
    let mut task_rng = substream(cfg.seed, "tasks");
    let subset_root = substream_seed(cfg.seed, "subset");
    let infer_seed = substream_seed(cfg.seed, "infer");
    let objective = Objective {
        selector,
        hub: inputs.hub,
        datasets: inputs.datasets,
        lambda: cfg.lambda,
        orientation: cfg.loss_orientation,
    };
    let f = |p: &ParamStore, d: &Draw| objective.loss_grad(p, d);
    let steps_per_epoch = inputs.train.len().div_ceil(cfg.batch_size).max(1);

    let mut step = 0usize;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 0..cfg.epochs {
        let mut losses = Vec::with_capacity(steps_per_epoch);
        if cfg.meta_learning {
            for _ in 0..steps_per_epoch {
                let seed = substream_seed(subset_root, &format!("step{step}"));
                let tasks: Vec<MetaTask<Draw>> = sample_batch(inputs.train, step, cfg, &mut task_rng)?
                    .into_iter()
                    .map(|t| MetaTask {
                        support: draws(&t.support, seed),
                        query: draws(&t.query, seed),
                    })
                    .collect();
                let loss = meta_step(&mut params, &mut adam, &tasks, cfg.inner_lr, cfg.inner_steps, cfg.outer_lr, &f)?;
                round(&mut params);
                losses.push(loss);
                step += 1;
            }
        } else {
            let mut order = inputs.train.samples.clone();
            order.shuffle(&mut task_rng);
            for chunk in order.chunks(cfg.batch_size) {
                let seed = substream_seed(subset_root, &format!("step{step}"));
                let loss = erm_step(&mut params, &mut adam, &draws(chunk, seed), cfg.outer_lr, &f)?;
                round(&mut params);
                losses.push(loss);
                step += 1;
            }
        }
        params.validate()?;
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let report = evaluate(&params, selector, inputs.hub, inputs.datasets, inputs.val, infer_seed)?;
        let val_loss = report
            .rows
            .iter()
            .map(|r| total_loss(&r.predicted_scores, &r.truth_scores, cfg.lambda, cfg.loss_orientation))
            .sum::<Result<f64>>()?
            / report.rows.len() as f64;
        let val_tau_w = report.summary.mean_tau_w;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::NonFinite(format!("losses at epoch {epoch}")));
        }
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} val tau_w {val_tau_w:.4}");
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_tau_w,
        });
        if best.as_ref().is_none_or(|(t, _, _)| val_tau_w > *t) {
            best = Some((val_tau_w, epoch, params.clone()));
        }
    }
    let (final_val_tau_w, best_epoch, best_params) = best.expect("at least one epoch");

    let mut checkpoint = Checkpoint::new(best_params.clone());
    checkpoint.dtype = cfg.precision;
    let meta = &mut checkpoint.metadata;
    meta.insert("selector".into(), serde_json::to_value(selector)?);
    meta.insert("train".into(), serde_json::to_value(cfg)?);
    meta.insert("hub".into(), serde_json::to_value(&inputs.hub.ids)?);
    meta.insert("hub_normalization".into(), serde_json::to_value(&inputs.hub.normalization)?);
    meta.insert("infer_seed".into(), serde_json::to_value(infer_seed)?);
    meta.insert("best_epoch".into(), serde_json::to_value(best_epoch)?);
    Ok(TrainOutcome {
        params: best_params,
        checkpoint,
        report: TrainReport {
            epochs,
            best_epoch,
            final_val_tau_w,
            steps: step,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            checkpoint_path: None,
        },
    })
}

/// Score the hub for several horizons from one shared data embedding.
pub fn predict_horizons(
    params: &ParamStore,
    selector: &SelectorConfig,
    hub: &HubFeatures,
    subsets: &[Tensor],
    horizons: &[usize],
) -> Result<Vec<ScoreResult>> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let e_m = encode_hub_graph(&mut g, &vars, hub)?;
    let e_d = data_embedding_graph(&mut g, &vars, subsets, selector)?;
    horizons
        .iter()
        .map(|&h| {
            let v = score_graph(&mut g, &vars, e_m, e_d, h, &selector.scorer)?;
            Ok(ScoreResult::from_graph(&g, &v))
        })
        .collect()
}

/// Metrics of `params` on every sample of `meta`, each dataset embedded
/// from its `M` inference subsets.
pub fn evaluate(
    params: &ParamStore,
    selector: &SelectorConfig,
    hub: &HubFeatures,
    datasets: &BTreeMap<String, TimeSeriesDataset>,
    meta: &MetaDataset,
    infer_seed: u64,
) -> Result<EvalReport> {
    let mut by_dataset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for s in &meta.samples {
        by_dataset.entry(s.dataset_id.as_str()).or_default().push(s.horizon);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_dataset.into_iter().collect();
    let preds = groups
        .par_iter()
        .map(|(id, hs)| {
            let d = datasets
                .get(*id)
                .ok_or_else(|| invalid!("meta-sample refers to unknown dataset `{id}`"))?;
            let subsets = inference_subsets(d, infer_seed, &selector.encoder)?;
            predict_horizons(params, selector, hub, &subsets, hs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lookup: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for ((id, hs), res) in groups.iter().zip(preds) {
        for (h, r) in hs.iter().zip(res) {
            lookup.insert((id, *h), r.scores);
        }
    }
    EvalReport::build(
        &hub.ids,
        meta.samples.iter().map(|s| (s.dataset_id.as_str(), s.horizon, s.scores.as_slice())),
        |id, h| Ok(lookup[&(id, h)].clone()),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOutput {
    pub model_ids: Vec<String>,
    pub result: ScoreResult,
    /// Per-model standard deviation of the score across single-subset predictions.
    pub resample_std: Vec<f64>,
    /// Model ids by descending predicted score.
    pub ranking: Vec<String>,
}

fn metadata<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    let v = ckpt
        .metadata
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("metadata has no `{key}` entry")))?;
    Ok(serde_json::from_value(v.clone())?)
}

/// Hub features of `cards` under the normalization stored with the checkpoint.
pub fn hub_features_for(ckpt: &Checkpoint, cards: &[ModelCard]) -> Result<HubFeatures> {
    let selector: SelectorConfig = metadata(ckpt, "selector")?;
    match ckpt.metadata.get("hub_normalization") {
        Some(v) => {
            let norm: HubNormalization = serde_json::from_value(v.clone())?;
            HubFeatures::with_normalization(cards, &selector.model_encoder, &norm)
        }
        None => HubFeatures::from_cards(cards, &selector.model_encoder),
    }
}

/// Rank the hub for `(dataset, h)` with a trained checkpoint.
pub fn rank_models(ckpt: &Checkpoint, hub: &HubFeatures, dataset: &TimeSeriesDataset, h: usize) -> Result<RankOutput> {
    let selector: SelectorConfig = metadata(ckpt, "selector")?;
    let trained_hub: Vec<String> = metadata(ckpt, "hub")?;
    if trained_hub.len() != hub.k() {
        return Err(invalid!(
            "checkpoint was trained on a hub of {} models, got {}",
            trained_hub.len(),
            hub.k()
        ));
    }
    let infer_seed: u64 = metadata(ckpt, "infer_seed")?;
    let subsets = inference_subsets(dataset, infer_seed, &selector.encoder)?;
    let result = predict_horizons(&ckpt.params, &selector, hub, &subsets, &[h])?.remove(0);
    let singles = subsets
        .iter()
        .map(|s| predict(&ckpt.params, &selector, hub, std::slice::from_ref(s), h).map(|r| r.scores))
        .collect::<Result<Vec<_>>>()?;
    let m = singles.len() as f64;
    let resample_std = (0..hub.k())
        .map(|k| {
            let mean = singles.iter().map(|s| s[k]).sum::<f64>() / m;
            (singles.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / m).sqrt()
        })
        .collect();
    let ranking = ranking_from_scores(&result.scores)
        .into_iter()
        .map(|i| hub.ids[i].clone())
        .collect();
    Ok(RankOutput {
        model_ids: hub.ids.clone(),
        result,
        resample_std,
        ranking,
    })
}
