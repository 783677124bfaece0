use std::collections::BTreeSet;

use proptest::prelude::*;
use tsselect::data_encoder::{encode_data, init_data_encoder, sample_subset, z_normalize, EncoderConfig};
use tsselect::meta_dataset::{
    normalize_scores, sample_tasks, split_meta_ids, MetaDataset, MetaSample, Provenance, ScoreNormalization,
    SplitRatio, TaskStrategy, TimeSeriesDataset,
};
use tsselect::metrics::{kendall_tau, pr_top_k, ranking_from_scores, weighted_kendall_tau};
use tsselect::numerics::{normal_tensor, scaled_dot_attention, softmax, ParamStore, Tensor};
use tsselect::rng::seeded;
use tsselect::scorer::{init_scorer, router_weights, score_hub, ScorerConfig};

fn finite_vec(len: impl Into<proptest::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, len)
}

/// Distinct values: a shuffled integer ramp.
fn distinct(k: usize) -> impl Strategy<Value = Vec<f64>> {
    Just((0..k).map(|i| i as f64).collect::<Vec<_>>()).prop_shuffle()
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

proptest! {
    #[test]
    fn softmax_rows_are_shift_invariant_distributions(data in finite_vec(12), shift in -100.0f64..100.0) {
        let x = Tensor::new(vec![3, 4], data.clone()).unwrap();
        let s = softmax(&x, 1).unwrap();
        let shifted = softmax(&Tensor::new(vec![3, 4], data.iter().map(|v| v + shift).collect()).unwrap(), 1).unwrap();
        for i in 0..3 {
            let row = s.row(i);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(s.max_abs_diff(&shifted).unwrap() < 1e-12);
    }

    #[test]
    fn attention_outputs_stay_inside_value_envelope(q in finite_vec(8), k in finite_vec(12), v in finite_vec(12)) {
        let q = Tensor::new(vec![2, 4], q).unwrap();
        let k = Tensor::new(vec![3, 4], k).unwrap();
        let v = Tensor::new(vec![3, 4], v).unwrap();
        let (out, attn) = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..2 {
            prop_assert!((attn.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for j in 0..4 {
                let col: Vec<f64> = (0..3).map(|r| v.at(r, j)).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.at(i, j) >= lo - 1e-9 && out.at(i, j) <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn normalized_scores_ignore_affine_rescaling(errors in proptest::collection::vec(0.0f64..10.0, 2..10), a in 0.5f64..4.0, b in -3.0f64..3.0) {
        let r = normalize_scores(&errors, ScoreNormalization::MinMax).unwrap();
        let scaled: Vec<f64> = errors.iter().map(|e| a * e + b).collect();
        let r2 = normalize_scores(&scaled, ScoreNormalization::MinMax).unwrap();
        prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        for (x, y) in r.iter().zip(&r2) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - best;
        if spread > 0.0 {
            for (e, v) in errors.iter().zip(&r) {
                prop_assert_eq!(*e == best, *v == 1.0);
            }
        }
    }

    #[test]
    fn rank_metrics_ignore_increasing_transforms(pred in distinct(7), truth in finite_vec(7)) {
        // x³ + 5x is exact and strictly increasing on small integers.
        let warped: Vec<f64> = pred.iter().map(|x| x * x * x + 5.0 * x).collect();
        prop_assert_eq!(kendall_tau(&pred, &truth).unwrap(), kendall_tau(&warped, &truth).unwrap());
        prop_assert_eq!(weighted_kendall_tau(&pred, &truth).unwrap(), weighted_kendall_tau(&warped, &truth).unwrap());
    }

    #[test]
    fn weighted_tau_of_self_is_one(x in distinct(8)) {
        prop_assert_eq!(weighted_kendall_tau(&x, &x).unwrap(), 1.0);
        let t = weighted_kendall_tau(&x.iter().rev().copied().collect::<Vec<_>>(), &x).unwrap();
        prop_assert!((-1.0..=1.0).contains(&t));
    }

    #[test]
    fn top_k_is_monotone_and_saturates(cases in proptest::collection::vec((finite_vec(6), finite_vec(6)), 1..20)) {
        let rankings: Vec<Vec<usize>> = cases.iter().map(|(p, _)| ranking_from_scores(p)).collect();
        let truths: Vec<Vec<f64>> = cases.iter().map(|(_, t)| t.clone()).collect();
        let pr: Vec<f64> = (1..=6).map(|k| pr_top_k(&rankings, &truths, k).unwrap()).collect();
        prop_assert!(pr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(pr[5], 1.0);
    }

    #[test]
    fn split_partitions_the_datasets(n in 5usize..30, holdout in 1usize..4, seed in any::<u64>()) {
        let meta = meta_of(n);
        let s = split_meta_ids(&meta, holdout, seed).unwrap();
        prop_assert_eq!(s.test.len(), holdout);
        prop_assert!(!s.val.is_empty() && !s.train.is_empty());
        let all: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
    }

    #[test]
    fn data_embedding_ignores_window_order(seed in any::<u64>(), order in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
        let cfg = EncoderConfig { lookback: 16, patch: 4, d_model: 6, subset: 5, resamples: 1 };
        let mut rng = seeded(seed);
        let mut p = ParamStore::new();
        init_data_encoder(&mut p, &cfg, &mut rng).unwrap();
        let x = normal_tensor(&[5, 16], 1.0, &mut rng);
        let permuted: Vec<f64> = order.iter().flat_map(|&i| x.row(i).to_vec()).collect();
        let a = encode_data(&x, &p, &cfg).unwrap();
        let b = encode_data(&Tensor::new(vec![5, 16], permuted).unwrap(), &p, &cfg).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }
}

#[test]
fn router_weights_are_distributions_for_any_horizon() {
    use rand::Rng as _;
    let cfg = ScorerConfig::default();
    let mut rng = seeded(31);
    for _ in 0..1000 {
        let mut p = ParamStore::new();
        init_scorer(&mut p, &cfg, 8, &mut rng).unwrap();
        let h = rng.random_range(1..=10_000);
        let w = router_weights(h, &p, &cfg).unwrap();
        assert_eq!(w.len(), cfg.n_experts);
        assert!(w.iter().all(|v| *v > 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn score_hub_is_permutation_equivariant() {
    use rand::seq::SliceRandom;
    let cfg = ScorerConfig::default();
    let mut rng = seeded(32);
    let mut p = ParamStore::new();
    init_scorer(&mut p, &cfg, 16, &mut rng).unwrap();
    let e_m = normal_tensor(&[8, 16], 1.0, &mut rng);
    let e_d = normal_tensor(&[6, 16], 1.0, &mut rng);
    let base = score_hub(&e_m, &e_d, 336, &p, &cfg).unwrap();
    for _ in 0..100 {
        let mut perm: Vec<usize> = (0..8).collect();
        perm.shuffle(&mut rng);
        let rows: Vec<f64> = perm.iter().flat_map(|&i| e_m.row(i).to_vec()).collect();
        let r = score_hub(&Tensor::new(vec![8, 16], rows).unwrap(), &e_d, 336, &p, &cfg).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(r.scores[k].to_bits(), base.scores[i].to_bits());
            assert_eq!(r.attention.row(k), base.attention.row(i));
        }
        assert_eq!(r.expert_weights, base.expert_weights);
    }
}

#[test]
fn sampled_tasks_respect_their_strategy() {
    let meta = meta_of(10);
    let ids = meta.dataset_ids();
    let mut rng = seeded(33);
    let mut covered = BTreeSet::new();
    for trial in 0..10_000 {
        let strategy = TaskStrategy::for_batch(trial);
        let tasks = sample_tasks(&meta, strategy, 1, 4, 4, &mut rng).unwrap();
        let t = &tasks[0];
        assert_eq!(t.strategy, strategy);
        let key = |s: &MetaSample| (s.dataset_id.clone(), s.horizon);
        let support: BTreeSet<_> = t.support.iter().map(key).collect();
        let query: BTreeSet<_> = t.query.iter().map(key).collect();
        assert!(support.is_disjoint(&query));
        match strategy {
            TaskStrategy::CrossDataset => {
                let sd: BTreeSet<_> = t.support.iter().map(|s| &s.dataset_id).collect();
                assert_eq!(sd.len(), 1);
                assert!(t.query.iter().all(|q| !sd.contains(&q.dataset_id)));
            }
            TaskStrategy::CrossHorizon => {
                let h = t.support[0].horizon;
                assert!(t.support.iter().all(|s| s.horizon == h));
                assert!(t.query.iter().all(|q| q.horizon != h));
            }
        }
        covered.extend(t.support.iter().chain(&t.query).map(|s| s.dataset_id.clone()));
    }
    assert_eq!(covered.into_iter().collect::<Vec<_>>(), ids);
}

#[test]
fn subset_offsets_cover_the_training_split() {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seeded(34);
    let series: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    let d = TimeSeriesDataset::from_columns("noise", "x", "x", vec![series.clone()], SplitRatio::new(1, 0, 0)).unwrap();
    let l = 16;
    let windows: Vec<Vec<f64>> = (0..=200 - l).map(|s| z_normalize(&series[s..s + l])).collect();
    let subset = sample_subset(&d, l, 10_000, &mut rng).unwrap();
    let mut seen = BTreeSet::new();
    for i in 0..10_000 {
        let row = subset.row(i);
        let s = windows.iter().position(|w| w.as_slice() == row).expect("window comes from the series");
        seen.insert(s);
    }
    assert!(seen.len() as f64 >= 0.95 * windows.len() as f64, "{} of {}", seen.len(), windows.len());
}
