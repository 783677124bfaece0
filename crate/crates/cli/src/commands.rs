use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use tsselect::diagnostics::{run_gradcheck, Component, GradcheckConfig, GradcheckRow};
use tsselect::meta_dataset::{
    generate_synthetic_world, load_dataset, load_world, save_world, split_meta_ids, DatasetSchema, LoadOptions,
    MetaDataset, MetaSplit, StoredWorld, WorldIndex,
};
use tsselect::metrics::EvalReport;
use tsselect::model_encoder::HubFeatures;
use tsselect::numerics::Checkpoint;
use tsselect::rng::{substream, substream_seed};
use tsselect::trainer::{evaluate, hub_features_for, rank_models, train, TrainInputs};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub type CliResult<T> = Result<T, String>;

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn seeds(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::new();
    s.insert("root".into(), cfg.seed);
    for name in ["world", "split"] {
        s.insert(name.into(), substream_seed(cfg.seed, name));
    }
    for name in ["init", "tasks", "subset", "infer"] {
        s.insert(name.into(), substream_seed(cfg.train.seed, name));
    }
    s
}

fn world_inputs(manifest: &mut Manifest, dir: &Path, index: &WorldIndex) -> CliResult<()> {
    for f in index.files(dir) {
        manifest.input(&f)?;
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(|e| format!("cannot load checkpoint {}: {e}", path.display()))
}

fn checkpoint_split(ckpt: &Checkpoint) -> CliResult<MetaSplit> {
    let v = ckpt
        .metadata
        .get("split")
        .ok_or("checkpoint metadata carries no split")?;
    serde_json::from_value(v.clone()).map_err(err)
}

pub fn gen_synthetic(cfg: &RunConfig) -> CliResult<()> {
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    let world = generate_synthetic_world(cfg.seed, &cfg.world).map_err(err)?;
    for note in &world.notes {
        log::info!("{note}");
    }
    let files = save_world(&world, &cfg.selector.model_encoder.probe, out).map_err(err)?;
    let mut manifest = Manifest::new("gen-synthetic", cfg, seeds(cfg));
    for f in &files {
        manifest.output(out, f)?;
    }
    manifest.write(&out.join("gen_synthetic.manifest.json"))?;
    println!(
        "wrote {} datasets, {} model cards and {} meta-samples to {}",
        world.datasets.len(),
        world.hub.len(),
        world.meta.len(),
        out.display()
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, world_dir: &Path) -> CliResult<()> {
    let stored = load_world(world_dir).map_err(err)?;
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    let hub = HubFeatures::from_cards(&stored.cards, &cfg.selector.model_encoder).map_err(err)?;
    let split = split_meta_ids(&stored.meta, cfg.holdout, substream_seed(cfg.seed, "split")).map_err(err)?;
    let (tr, va, _) = split.apply(&stored.meta);
    let inputs = TrainInputs {
        train: &tr,
        val: &va,
        datasets: &stored.datasets,
        hub: &hub,
    };
    let mut outcome = train(&inputs, &cfg.selector, &cfg.train).map_err(err)?;
    outcome
        .checkpoint
        .metadata
        .insert("split".into(), serde_json::to_value(&split).map_err(err)?);

    let ckpt_path = out.join("checkpoint.bin");
    outcome.checkpoint.save(&ckpt_path).map_err(err)?;
    outcome.report.checkpoint_path = Some("checkpoint.bin".into());
    let split_path = out.join("split.json");
    write_json(&split_path, &split)?;
    // The report carries wall-clock time, so it stays out of the manifest's
    // output hashes.
    write_json(&out.join("train_report.json"), &outcome.report)?;

    let mut manifest = Manifest::new("train", cfg, seeds(cfg));
    world_inputs(&mut manifest, world_dir, &stored.index)?;
    manifest.output(out, &ckpt_path)?;
    manifest.output(out, &split_path)?;
    manifest.write(&out.join("train.manifest.json"))?;
    println!(
        "trained {} epochs ({} steps); best epoch {} with validation tau_w {:.4}; checkpoint {}",
        outcome.report.epochs.len(),
        outcome.report.steps,
        outcome.report.best_epoch,
        outcome.report.final_val_tau_w,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stub {
    /// Predicted scores equal the truth.
    Oracle,
    /// Independent uniform scores, redrawn per resample.
    Random,
}

/// Distribution of the mean τ_ω of random scores over a fixed case set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomNull {
    pub resamples: usize,
    pub n_cases: usize,
    pub mean_tau_w: f64,
    pub mean_tau: f64,
    pub std_tau_w: f64,
    /// Nearest-rank 95th percentile of the per-resample mean τ_ω.
    pub quantile_95: f64,
    pub draws: Vec<f64>,
}

fn partition_of(meta: &MetaDataset, split: &MetaSplit, part: Partition) -> CliResult<MetaDataset> {
    let ids = match part {
        Partition::All => return Ok(meta.clone()),
        Partition::Train => &split.train,
        Partition::Val => &split.val,
        Partition::Test => &split.test,
    };
    let m = meta.restrict(ids);
    if m.is_empty() {
        return Err(format!("partition {part:?} has no samples"));
    }
    Ok(m)
}

fn random_null(meta: &MetaDataset, seed: u64, resamples: usize) -> CliResult<RandomNull> {
    if resamples == 0 {
        return Err("--resamples must be at least 1".into());
    }
    let k = meta.k();
    let mut draws = Vec::with_capacity(resamples);
    let mut taus = Vec::with_capacity(resamples);
    for r in 0..resamples {
        let mut rng = substream(seed, &format!("stub{r}"));
        let report = EvalReport::build(
            &meta.hub,
            meta.samples.iter().map(|s| (s.dataset_id.as_str(), s.horizon, s.scores.as_slice())),
            |_, _| Ok((0..k).map(|_| rng.random::<f64>()).collect()),
        )
        .map_err(err)?;
        draws.push(report.summary.mean_tau_w);
        taus.push(report.summary.mean_tau);
    }
    let n = resamples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * n).ceil() as usize).clamp(1, resamples);
    Ok(RandomNull {
        resamples,
        n_cases: meta.len(),
        mean_tau_w: mean,
        mean_tau: taus.iter().sum::<f64>() / n,
        std_tau_w: std,
        quantile_95: sorted[rank - 1],
        draws,
    })
}

pub struct EvalArgs<'a> {
    pub world: &'a Path,
    pub checkpoint: Option<&'a Path>,
    pub partition: Partition,
    pub stub: Option<Stub>,
    pub resamples: usize,
}

pub fn eval_cmd(cfg: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    let stored = load_world(args.world).map_err(err)?;
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    let mut manifest = Manifest::new("eval", cfg, seeds(cfg));
    world_inputs(&mut manifest, args.world, &stored.index)?;

    let ckpt = match args.checkpoint {
        Some(p) => {
            manifest.input(p)?;
            Some(load_checkpoint(p)?)
        }
        None => None,
    };
    let split = match &ckpt {
        Some(c) => checkpoint_split(c)?,
        None => split_meta_ids(&stored.meta, cfg.holdout, substream_seed(cfg.seed, "split")).map_err(err)?,
    };
    let part = partition_of(&stored.meta, &split, args.partition)?;

    let json_path = out.join("eval.json");
    match (args.stub, &ckpt) {
        (Some(Stub::Random), _) => {
            let null = random_null(&part, substream_seed(cfg.seed, "stub"), args.resamples)?;
            write_json(&json_path, &null)?;
            manifest.output(out, &json_path)?;
            println!(
                "random-score null over {} cases, {} resamples: mean tau_w {:.4} (sd {:.4}), 95th percentile {:.4}",
                null.n_cases, null.resamples, null.mean_tau_w, null.std_tau_w, null.quantile_95
            );
        }
        (stub, ckpt) => {
            let report = match (stub, ckpt) {
                (Some(Stub::Oracle), _) => EvalReport::build(
                    &part.hub,
                    part.samples.iter().map(|s| (s.dataset_id.as_str(), s.horizon, s.scores.as_slice())),
                    |id, h| {
                        Ok(part
                            .samples
                            .iter()
                            .find(|s| s.dataset_id == id && s.horizon == h)
                            .expect("case comes from the partition")
                            .scores
                            .clone())
                    },
                )
                .map_err(err)?,
                (None, Some(c)) => evaluate_checkpoint(c, &stored, &part)?,
                (None, None) => return Err("eval needs --checkpoint unless a --stub is given".into()),
                (Some(Stub::Random), _) => unreachable!(),
            };
            let csv_path = out.join("eval.csv");
            let file = fs::File::create(&csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?;
            report.write_csv(file).map_err(err)?;
            write_json(&json_path, &report)?;
            manifest.output(out, &csv_path)?;
            manifest.output(out, &json_path)?;
            let s = &report.summary;
            println!(
                "{} cases: mean tau {:.4}, mean tau_w {:.4}, Pr(top1) {:.3}, Pr(top2) {:.3}, Pr(top3) {:.3}",
                s.n_cases, s.mean_tau, s.mean_tau_w, s.pr_top1, s.pr_top2, s.pr_top3
            );
        }
    }
    manifest.write(&out.join("eval.manifest.json"))
}

fn evaluate_checkpoint(ckpt: &Checkpoint, stored: &StoredWorld, part: &MetaDataset) -> CliResult<EvalReport> {
    let hub = hub_features_for(ckpt, &stored.cards).map_err(err)?;
    let selector = serde_json::from_value(ckpt.metadata.get("selector").cloned().ok_or("checkpoint has no selector config")?)
        .map_err(err)?;
    let infer_seed: u64 =
        serde_json::from_value(ckpt.metadata.get("infer_seed").cloned().ok_or("checkpoint has no inference seed")?)
            .map_err(err)?;
    evaluate(&ckpt.params, &selector, &hub, &stored.datasets, part, infer_seed).map_err(err)
}

pub enum DatasetRef {
    Id(String),
    Csv(PathBuf),
}

pub struct RankArgs<'a> {
    pub world: &'a Path,
    pub checkpoint: &'a Path,
    pub dataset: DatasetRef,
    pub horizon: usize,
    pub export_attention: bool,
}

pub fn rank_cmd(cfg: &RunConfig, args: &RankArgs) -> CliResult<()> {
    let stored = load_world(args.world).map_err(err)?;
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    let ckpt = load_checkpoint(args.checkpoint)?;
    let mut manifest = Manifest::new("rank", cfg, seeds(cfg));
    for c in &stored.index.cards {
        manifest.input(&args.world.join(c))?;
    }
    manifest.input(args.checkpoint)?;
    let dataset = match &args.dataset {
        DatasetRef::Id(id) => {
            let entry = stored
                .index
                .datasets
                .iter()
                .find(|d| &d.id == id)
                .ok_or_else(|| format!("dataset `{id}` is not part of the world"))?;
            manifest.input(&args.world.join(&entry.file))?;
            stored.datasets[id].clone()
        }
        DatasetRef::Csv(path) => {
            manifest.input(path)?;
            load_dataset(path, DatasetSchema::WideCsv, &LoadOptions::default()).map_err(err)?
        }
    };
    let hub = hub_features_for(&ckpt, &stored.cards).map_err(err)?;
    let ranked = rank_models(&ckpt, &hub, &dataset, args.horizon).map_err(err)?;

    let csv_path = out.join("rank.csv");
    let mut table = String::from("rank,model_id,score,resample_std\n");
    println!("{:>4}  {:<20} {:>12} {:>12}", "rank", "model", "score", "resample_sd");
    for (pos, id) in ranked.ranking.iter().enumerate() {
        let k = ranked.model_ids.iter().position(|m| m == id).expect("ranking lists hub ids");
        let (score, sd) = (ranked.result.scores[k], ranked.resample_std[k]);
        table.push_str(&format!("{},{id},{score:.17e},{sd:.17e}\n", pos + 1));
        println!("{:>4}  {:<20} {:>12.6} {:>12.6}", pos + 1, id, score, sd);
    }
    fs::write(&csv_path, table).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    manifest.output(out, &csv_path)?;
    if args.export_attention {
        let att = out.join("attention.csv");
        let weights = out.join("expert_weights.csv");
        ranked.result.write_attention_csv(&att, &ranked.model_ids).map_err(err)?;
        ranked.result.write_weights_csv(&weights).map_err(err)?;
        manifest.output(out, &att)?;
        manifest.output(out, &weights)?;
    }
    manifest.write(&out.join("rank.manifest.json"))
}

pub fn gradcheck_cmd(cfg: &RunConfig, components: &[Component], gc: &GradcheckConfig) -> CliResult<()> {
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    let list: Vec<Component> = if components.is_empty() {
        Component::ALL.to_vec()
    } else {
        components.to_vec()
    };
    let rows: Vec<GradcheckRow> = run_gradcheck(&list, gc).map_err(err)?;
    println!("{:<26} {:>9} {:>14} {:>6}", "component", "instances", "max_rel_error", "status");
    for r in &rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{:<26} {:>9} {:>14.3e} {:>6}", r.component.name(), r.instances, r.max_error, status);
    }
    let json = out.join("gradcheck.json");
    write_json(&json, &rows)?;
    let mut manifest = Manifest::new("gradcheck", cfg, seeds(cfg));
    manifest.output(out, &json)?;
    manifest.write(&out.join("gradcheck.manifest.json"))?;
    let failed: Vec<&GradcheckRow> = rows.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        eprintln!(
            "gradcheck failed: {} (instance {}, relative error {:.3e} >= {:.0e})",
            r.component, r.worst_instance, r.max_error, gc.tolerance
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(format!("{} of {} components failed the gradient check", failed.len(), rows.len()))
    }
}
