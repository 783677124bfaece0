use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng as _;
use std::hint::black_box;
use tsselect::metrics::weighted_kendall_tau;
use tsselect::rng::seeded;
use tsselect::selector::{inference_subsets, predict};
use tsselect::trainer::{Draw, Objective};
use tsselect_bench::setup;

fn forward(c: &mut Criterion) {
    let s = setup(0);
    let dataset = &s.datasets[&s.samples[0].dataset_id];
    let subsets = inference_subsets(dataset, 0, &s.selector.encoder).unwrap();
    c.bench_function("predict (M subsets, default sizes)", |b| {
        b.iter(|| predict(&s.params, &s.selector, &s.hub, black_box(&subsets), 96).unwrap())
    });
}

fn loss_and_gradient(c: &mut Criterion) {
    let s = setup(1);
    let objective = Objective {
        selector: &s.selector,
        hub: &s.hub,
        datasets: &s.datasets,
        lambda: 0.7,
        orientation: Default::default(),
    };
    let draw = Draw {
        sample: s.samples[0].clone(),
        seed: 3,
    };
    c.bench_function("loss_grad (one meta-sample)", |b| {
        b.iter(|| objective.loss_grad(&s.params, black_box(&draw)).unwrap())
    });
}

fn ranking_metric(c: &mut Criterion) {
    let mut rng = seeded(2);
    let pred: Vec<f64> = (0..64).map(|_| rng.random()).collect();
    let truth: Vec<f64> = (0..64).map(|_| rng.random()).collect();
    c.bench_function("weighted_kendall_tau K=64", |b| {
        b.iter(|| weighted_kendall_tau(black_box(&pred), black_box(&truth)).unwrap())
    });
}

criterion_group!(benches, forward, loss_and_gradient, ranking_metric);
criterion_main!(benches);
