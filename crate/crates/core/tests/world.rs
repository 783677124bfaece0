mod common;

use std::collections::BTreeSet;

use tsselect::meta_dataset::{
    generate_synthetic_world, load_world, oracle_ground_truth, save_world, split_meta_ids, synthetic_hub, top1_models,
    MetaDataset, MetaSample, OracleConfig, Provenance, SplitRatio, TimeSeriesDataset, WorldConfig,
};
use tsselect::model_encoder::{Architecture, ProbeConfig};
use tsselect::rng::seeded;

#[test]
fn default_world_has_four_samples_per_dataset() {
    let w = generate_synthetic_world(0, &WorldConfig::default()).unwrap();
    assert_eq!(w.datasets.len(), 14);
    assert_eq!(w.hub.len(), 8);
    assert_eq!(w.meta.len(), 56);
    assert_eq!(w.meta.horizons(), vec![96, 192, 336, 720]);
    for s in &w.meta.samples {
        assert_eq!(s.scores.len(), 8);
        assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.scores.contains(&1.0));
        assert_eq!(s.provenance, Provenance::Oracle);
    }
}

#[test]
fn top1_model_varies_across_datasets() {
    // Some seed among the first five must give two datasets with different winners.
    let ok = (0..5).any(|seed| {
        let w = generate_synthetic_world(seed, &WorldConfig::default()).unwrap();
        top1_models(&w.meta).into_iter().collect::<BTreeSet<_>>().len() >= 2
    });
    assert!(ok);
}

#[test]
fn generating_process_wins_the_oracle() {
    let hub = synthetic_hub(8, 0).unwrap();
    let pair = vec![hub[0].clone(), hub[3].clone()];
    assert_eq!(pair[1].id, "seasonal-24x4");
    let mut rng = seeded(11);
    let cycle: Vec<f64> = (0..24).map(|_| rand::Rng::random::<f64>(&mut rng) * 4.0 - 2.0).collect();
    let series: Vec<f64> = (0..1200).map(|t| cycle[t % 24]).collect();
    let d = TimeSeriesDataset::from_columns("periodic", "energy", "hourly", vec![series], SplitRatio::new(6, 2, 2)).unwrap();
    let out = oracle_ground_truth(&pair, &d, 24, &OracleConfig::default()).unwrap();
    assert_eq!(out.sample.scores, vec![0.0, 1.0]);
    assert!(out.mse[1] < 1e-9 * out.mse[0], "{:?}", out.mse);
}

#[test]
fn hub_architecture_counts() {
    let hub = synthetic_hub(8, 0).unwrap();
    let count = |a: Architecture| hub.iter().filter(|m| m.meta.architecture == a).count();
    assert_eq!(count(Architecture::EncoderOnly), 3);
    assert_eq!(count(Architecture::DecoderOnly), 2);
    assert_eq!(count(Architecture::EncoderDecoder), 3);
}

fn meta_of(n: usize) -> MetaDataset {
    let samples = (0..n)
        .flat_map(|i| {
            [96, 192, 336, 720].map(|h| MetaSample {
                dataset_id: format!("d{i:02}"),
                horizon: h,
                scores: vec![1.0, 0.0],
                provenance: Provenance::Oracle,
            })
        })
        .collect();
    MetaDataset::new(vec!["a".into(), "b".into()], samples).unwrap()
}

#[test]
fn fourteen_datasets_split_three_ten_one() {
    let meta = meta_of(14);
    for seed in 0..20 {
        let s = split_meta_ids(&meta, 3, seed).unwrap();
        assert_eq!((s.test.len(), s.train.len(), s.val.len()), (3, 10, 1));
        let all: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), 14);
    }
}

#[test]
fn saved_world_loads_back() {
    let f = common::fixture(3);
    let dir = tempfile::tempdir().unwrap();
    let probe = ProbeConfig {
        dim: 8,
        ..Default::default()
    };
    let files = save_world(&f.world, &probe, dir.path()).unwrap();
    assert!(files.iter().all(|p| p.is_file()));
    let stored = load_world(dir.path()).unwrap();
    assert_eq!(stored.meta, f.world.meta);
    assert_eq!(stored.cards, f.cards);
    for d in &f.world.datasets {
        let back = &stored.datasets[&d.id];
        assert_eq!(back.values(), d.values());
        assert_eq!((back.split, &back.domain, &back.frequency), (d.split, &d.domain, &d.frequency));
    }
}

#[test]
fn missing_world_files_are_all_listed() {
    let f = common::fixture(3);
    let dir = tempfile::tempdir().unwrap();
    save_world(&f.world, &ProbeConfig::default(), dir.path()).unwrap();
    let first = &f.world.datasets[0].id;
    std::fs::remove_file(dir.path().join(format!("datasets/{first}.csv"))).unwrap();
    std::fs::remove_file(dir.path().join("meta.json")).unwrap();
    let err = load_world(dir.path()).err().unwrap().to_string();
    assert!(err.contains(&format!("{first}.csv")), "{err}");
    assert!(err.contains("meta.json"), "{err}");
}
