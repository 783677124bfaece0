//! Forward passes checked against plain-loop reference implementations and
//! values computed at extended precision.

use rand::Rng as _;
use tsselect::data_encoder::{encode_data, positional_encoding, EncoderConfig, PATCH_B, PATCH_W, SA_K, SA_Q, SA_V};
use tsselect::numerics::{
    adam_step, matmul, mlp_forward, normal_tensor, scaled_dot_attention, softmax, Activation, AdamState, Grads,
    ParamStore, Tensor,
};
use tsselect::rng::{seeded, Rng};
use tsselect::scorer::{init_scorer, score_hub, ScorerConfig, CA_K, CA_Q, CA_V};
use tsselect::trainer::{total_loss, LossOrientation};

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    normal_tensor(shape, 1.0, rng)
}

fn ref_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn ref_softmax_rows(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn ref_transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn ref_attention(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let scale = 1.0 / (q[0].len() as f64).sqrt();
    let logits: Vec<Vec<f64>> = ref_matmul(q, &ref_transpose(k))
        .into_iter()
        .map(|r| r.into_iter().map(|x| x * scale).collect())
        .collect();
    let a = ref_softmax_rows(&logits);
    (ref_matmul(&a, v), a)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (m, _) = t.dims2().unwrap();
    (0..m).map(|i| t.row(i).to_vec()).collect()
}

fn max_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = b.iter().flatten().copied().collect();
    assert_eq!(a.len(), flat.len());
    a.data().iter().zip(&flat).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn matmul_matches_triple_loop_exactly() {
    let mut rng = seeded(1);
    for _ in 0..20 {
        let (a, b) = (random(&[3, 4], &mut rng), random(&[4, 2], &mut rng));
        let got = matmul(&a, &b).unwrap();
        assert_eq!(max_diff(&got, &ref_matmul(&rows(&a), &rows(&b))), 0.0);
    }
}

#[test]
fn softmax_of_one_two_three_matches_extended_precision() {
    // 40-digit values of exp(i)/Σ exp(j).
    let expected = [
        0.090030573170380457998022101484491797867,
        0.244728471054797652472959618340762797199,
        0.665240955774821889529018280174745404933,
    ];
    let got = softmax(&Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap(), 1).unwrap();
    for (g, e) in got.data().iter().zip(expected) {
        assert!((g - e).abs() <= 2.0 * f64::EPSILON * e, "{g} vs {e}");
    }
}

#[test]
fn attention_matches_composed_oracle() {
    let mut rng = seeded(2);
    for _ in 0..20 {
        let (q, k, v) = (random(&[2, 4], &mut rng), random(&[3, 4], &mut rng), random(&[3, 4], &mut rng));
        let (out, attn) = scaled_dot_attention(&q, &k, &v).unwrap();
        let (ro, ra) = ref_attention(&rows(&q), &rows(&k), &rows(&v));
        assert!(max_diff(&out, &ro) < 1e-12);
        assert!(max_diff(&attn, &ra) < 1e-12);
    }
}

#[test]
fn mlp_matches_loop_oracle() {
    let mut rng = seeded(3);
    let dims = [5usize, 7, 3];
    for act in [Activation::Relu, Activation::Gelu] {
        let mut p = ParamStore::new();
        for l in 0..2 {
            p.insert(format!("net.{l}.weight"), random(&[dims[l], dims[l + 1]], &mut rng)).unwrap();
            p.insert(format!("net.{l}.bias"), random(&[dims[l + 1]], &mut rng)).unwrap();
        }
        let x = random(&[4, 5], &mut rng);
        let got = mlp_forward(&x, &p, "net", dims.to_vec(), act).unwrap();
        let mut h = rows(&x);
        for l in 0..2 {
            let w = rows(p.get(&format!("net.{l}.weight")).unwrap());
            let b = p.get(&format!("net.{l}.bias")).unwrap().data().to_vec();
            h = ref_matmul(&h, &w);
            for r in h.iter_mut() {
                for (v, bj) in r.iter_mut().zip(&b) {
                    *v += bj;
                    if l == 0 {
                        *v = act.apply(*v);
                    }
                }
            }
        }
        assert!(max_diff(&got, &h) < 1e-12);
    }
}

#[test]
fn adam_drives_square_below_tenth() {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::vector(vec![1.0]).unwrap()).unwrap();
    let mut state = AdamState::default();
    for _ in 0..100 {
        let w = p.get("w").unwrap().data()[0];
        let mut g = Grads::new();
        g.insert("w".into(), Tensor::vector(vec![2.0 * w]).unwrap());
        adam_step(&mut p, &g, &mut state, 0.1).unwrap();
    }
    assert!(p.get("w").unwrap().data()[0].abs() < 0.1);
}

#[test]
fn positional_encoding_entry() {
    let pe = positional_encoding(6, 8).unwrap();
    assert_eq!(pe.at(1, 0), 1f64.sin());
    assert!((pe.at(1, 0) - 0.84147).abs() < 1e-5);
    assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
}

#[test]
fn zero_projections_average_value_projected_positions() {
    let cfg = EncoderConfig {
        lookback: 24,
        patch: 4,
        d_model: 6,
        subset: 3,
        resamples: 1,
    };
    let mut rng = seeded(4);
    let w_v = random(&[6, 6], &mut rng);
    let mut p = ParamStore::new();
    p.insert(PATCH_W, Tensor::zeros(&[4, 6])).unwrap();
    p.insert(PATCH_B, Tensor::zeros(&[6])).unwrap();
    p.insert(SA_Q, Tensor::zeros(&[6, 6])).unwrap();
    p.insert(SA_K, Tensor::zeros(&[6, 6])).unwrap();
    p.insert(SA_V, w_v.clone()).unwrap();
    let subset = random(&[3, 24], &mut rng);
    let e_d = encode_data(&subset, &p, &cfg).unwrap();

    let pv = ref_matmul(&rows(&positional_encoding(6, 6).unwrap()), &rows(&w_v));
    let mean: Vec<f64> = (0..6).map(|j| pv.iter().map(|r| r[j]).sum::<f64>() / 6.0).collect();
    let expected = vec![mean; 6];
    assert!(max_diff(&e_d, &expected) < 1e-12);
}

#[test]
fn score_hub_matches_composed_oracle() {
    let cfg = ScorerConfig {
        n_experts: 3,
        router_hidden: 5,
        expert_hidden: 7,
        ..Default::default()
    };
    let mut rng = seeded(5);
    for trial in 0..10 {
        let mut p = ParamStore::new();
        init_scorer(&mut p, &cfg, 6, &mut rng).unwrap();
        let names: Vec<String> = p.names().cloned().collect();
        for n in names.iter().filter(|n| n.ends_with(".bias")) {
            let shape = p.get(n).unwrap().shape().to_vec();
            *p.get_mut(n).unwrap() = normal_tensor(&shape, 0.3, &mut rng);
        }
        let (e_m, e_d) = (random(&[4, 6], &mut rng), random(&[5, 6], &mut rng));
        let h = [1, 96, 720, 5000][trial % 4];
        let got = score_hub(&e_m, &e_d, h, &p, &cfg).unwrap();

        let w = |n: &str| rows(p.get(n).unwrap());
        let (m, d) = (rows(&e_m), rows(&e_d));
        let (e_ca, attn) = ref_attention(&ref_matmul(&m, &w(CA_Q)), &ref_matmul(&d, &w(CA_K)), &ref_matmul(&d, &w(CA_V)));
        let mlp = |prefix: &str, x: Vec<Vec<f64>>, act: Activation| {
            let mut h = x;
            for l in 0..2 {
                h = ref_matmul(&h, &w(&format!("{prefix}.{l}.weight")));
                let b = p.get(&format!("{prefix}.{l}.bias")).unwrap().data();
                for r in h.iter_mut() {
                    for (v, bj) in r.iter_mut().zip(b) {
                        *v += bj;
                        if l == 0 {
                            *v = act.apply(*v);
                        }
                    }
                }
            }
            h
        };
        let hf = vec![vec![h as f64 / 720.0, (h as f64).ln() / 720f64.ln()]];
        let weights = ref_softmax_rows(&mlp("scorer.router", hf, Activation::Gelu)).remove(0);
        let mut scores = vec![0.0; 4];
        for (g, wg) in weights.iter().enumerate() {
            let out = mlp(&format!("scorer.expert{g}"), e_ca.clone(), Activation::Relu);
            for (s, o) in scores.iter_mut().zip(out) {
                *s += wg * o[0];
            }
        }
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&got.expert_weights, &weights));
        assert!(close(&got.scores, &scores), "{:?} vs {scores:?}", got.scores);
        assert!(max_diff(&got.attention, &attn) < 1e-12);
    }
}

#[test]
fn hand_set_experts_blend_by_router_weights() {
    // Expert 0 scores every row 1, expert 1 scores every row 0; the router
    // has zero weights and biases chosen so that w = [0.25, 0.75].
    let cfg = ScorerConfig {
        n_experts: 2,
        router_hidden: 2,
        expert_hidden: 2,
        ..Default::default()
    };
    let mut p = ParamStore::new();
    init_scorer(&mut p, &cfg, 3, &mut seeded(6)).unwrap();
    for g in 0..2 {
        *p.get_mut(&format!("scorer.expert{g}.0.weight")).unwrap() = Tensor::zeros(&[3, 2]);
        *p.get_mut(&format!("scorer.expert{g}.0.bias")).unwrap() = Tensor::zeros(&[2]);
        *p.get_mut(&format!("scorer.expert{g}.1.weight")).unwrap() = Tensor::zeros(&[2, 1]);
        *p.get_mut(&format!("scorer.expert{g}.1.bias")).unwrap() = Tensor::vector(vec![1.0 - g as f64]).unwrap();
    }
    *p.get_mut("scorer.router.1.weight").unwrap() = Tensor::zeros(&[2, 2]);
    *p.get_mut("scorer.router.1.bias").unwrap() = Tensor::vector(vec![0.0, 3f64.ln()]).unwrap();
    let mut rng = seeded(7);
    let r = score_hub(&random(&[4, 3], &mut rng), &random(&[2, 3], &mut rng), 96, &p, &cfg).unwrap();
    assert!((r.expert_weights[0] - 0.25).abs() < 1e-15 && (r.expert_weights[1] - 0.75).abs() < 1e-15);
    for s in &r.scores {
        assert!((s - 0.25).abs() < 1e-15);
    }
}

#[test]
fn two_model_loss_matches_extended_precision() {
    // r̂=[1,0], r=[0,1], λ=0.7; 40-digit evaluation of both orientations.
    // The instance is symmetric, so both give the same value.
    let expected = 2.444_320_266_148_227_713_300_154_736_789_691_916_28;
    for o in [LossOrientation::PredictionWeighted, LossOrientation::TruthWeighted] {
        let got = total_loss(&[1.0, 0.0], &[0.0, 1.0], 0.7, o).unwrap();
        assert!((got - expected).abs() < 4.0 * f64::EPSILON * expected, "{o:?}: {got}");
    }
}

#[test]
fn orientations_differ_off_symmetric_instances() {
    let mut rng = seeded(8);
    let r_hat: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
    let r = [1.0, 0.2, 0.0, 0.7, 0.4];
    let a = total_loss(&r_hat, &r, 0.0, LossOrientation::PredictionWeighted).unwrap();
    let b = total_loss(&r_hat, &r, 0.0, LossOrientation::TruthWeighted).unwrap();
    assert!((a - b).abs() > 1e-6);
}
