use rand::seq::SliceRandom;
use rand::Rng as _;
use tsselect::metrics::{kendall_tau, pr_top_k, ranking_from_scores, weighted_kendall_tau};
use tsselect::rng::seeded;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pair enumeration with ranks counted directly (truth values distinct).
fn tau_w_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let k = truth.len();
    let rho: Vec<f64> = (0..k)
        .map(|i| truth.iter().filter(|&&t| t > truth[i]).count() as f64)
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in i + 1..k {
            let w = 1.0 / (rho[i] + 1.0) + 1.0 / (rho[j] + 1.0);
            num += w * sign(truth[i] - truth[j]) * sign(pred[i] - pred[j]);
            den += w;
        }
    }
    num / den
}

/// Same sum in integers: weights scaled by 60 = lcm(1..=6).
fn tau_w_integer(pred: &[f64], truth: &[f64]) -> f64 {
    let k = truth.len();
    let rho: Vec<i64> = (0..k)
        .map(|i| truth.iter().filter(|&&t| t > truth[i]).count() as i64)
        .collect();
    let (mut num, mut den) = (0i64, 0i64);
    for i in 0..k {
        for j in i + 1..k {
            let w = 60 / (rho[i] + 1) + 60 / (rho[j] + 1);
            num += w * (sign(truth[i] - truth[j]) * sign(pred[i] - pred[j])) as i64;
            den += w;
        }
    }
    num as f64 / den as f64
}

#[test]
fn weighted_tau_equals_pair_enumeration_on_every_permutation() {
    let truth_all = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2];
    for k in 2..=6 {
        let truth = &truth_all[..k];
        for perm in permutations(k) {
            let pred: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
            let got = weighted_kendall_tau(&pred, truth).unwrap();
            assert_eq!(got, tau_w_oracle(&pred, truth), "K={k} pred={pred:?}");
            assert!((got - tau_w_integer(&pred, truth)).abs() < 1e-15);
        }
    }
}

#[test]
fn kendall_tau_matches_formula_on_random_vectors() {
    let mut rng = seeded(21);
    for _ in 0..1000 {
        let r: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let p: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let mut s = 0.0;
        for i in 0..8 {
            for j in i + 1..8 {
                s += sign(r[i] - r[j]) * sign(p[i] - p[j]);
            }
        }
        let expected = 2.0 / (8.0 * 7.0) * s;
        assert!((kendall_tau(&p, &r).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn adjacent_swap_example() {
    let tau = kendall_tau(&[3.0, 4.0, 2.0, 1.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
    assert!((tau - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn swapping_the_top_pair_costs_more() {
    let r = [3.0, 2.0, 1.0];
    let top = weighted_kendall_tau(&[2.0, 3.0, 1.0], &r).unwrap();
    let bottom = weighted_kendall_tau(&[3.0, 1.0, 2.0], &r).unwrap();
    assert!(top < bottom);
}

#[test]
fn top_k_examples() {
    let mut rng = seeded(22);
    let truths: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
    let rankings: Vec<Vec<usize>> = (0..30)
        .map(|_| {
            let mut v: Vec<usize> = (0..5).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    assert_eq!(pr_top_k(&rankings, &truths, 5).unwrap(), 1.0);
    assert_eq!(pr_top_k(&rankings, &truths, 9).unwrap(), 1.0);
    let truth = vec![vec![0.1, 0.8, 0.3]];
    assert_eq!(pr_top_k(&[ranking_from_scores(&[0.0, 5.0, 1.0])], &truth, 1).unwrap(), 1.0);
    assert!(pr_top_k(&rankings, &truths, 0).is_err());
}
