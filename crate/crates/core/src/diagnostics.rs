//! Gradient checks over every differentiable path of the selector.
//!
//! Each component is checked on small random instances: reverse-mode
//! gradients against central differences, summarized as the norm-wise
//! relative error `‖a − n‖ / (‖a‖ + ‖n‖)` per instance. Non-scalar outputs
//! are reduced to a scalar by a fixed random projection.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_encoder::{encode_data_graph, init_data_encoder, EncoderConfig};
use crate::error::{invalid, Error, Result};
use crate::model_encoder::{encode_hub_graph, init_model_encoder, HubFeatures, HubNormalization, ModelEncoderConfig};
use crate::numerics::{gradient_pairs, normal_tensor, norm_relative_error, uniform_tensor, Activation, Graph, MlpSpec};
use crate::numerics::{ParamStore, ParamVars, Tensor, Var};
use crate::rng::{substream, Rng};
use crate::scorer::{init_scorer, score_graph, ScorerConfig};
use crate::selector::{forward_graph, init_selector, SelectorConfig};
use crate::trainer::{total_loss_graph, LossOrientation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Softmax,
    Attention,
    Mlp,
    DataEncoder,
    ModelEncoder,
    Scorer,
    LossPredictionWeighted,
    LossTruthWeighted,
    EndToEndPredictionWeighted,
    EndToEndTruthWeighted,
}

impl Component {
    pub const ALL: [Component; 10] = [
        Component::Softmax,
        Component::Attention,
        Component::Mlp,
        Component::DataEncoder,
        Component::ModelEncoder,
        Component::Scorer,
        Component::LossPredictionWeighted,
        Component::LossTruthWeighted,
        Component::EndToEndPredictionWeighted,
        Component::EndToEndTruthWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Softmax => "softmax",
            Component::Attention => "attention",
            Component::Mlp => "mlp",
            Component::DataEncoder => "data_encoder",
            Component::ModelEncoder => "model_encoder",
            Component::Scorer => "scorer",
            Component::LossPredictionWeighted => "loss_prediction_weighted",
            Component::LossTruthWeighted => "loss_truth_weighted",
            Component::EndToEndPredictionWeighted => "end_to_end_prediction_weighted",
            Component::EndToEndTruthWeighted => "end_to_end_truth_weighted",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Component::ALL.iter().map(|c| c.name()).collect();
            invalid!("unknown component `{s}`; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Scale analytic gradients by `1 + 1e-3` before comparing; used to
    /// confirm the checker can fail.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            instances: 20,
            epsilon: 1e-6,
            tolerance: 1e-5,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub component: Component,
    pub instances: usize,
    pub max_error: f64,
    pub worst_instance: usize,
    pub passed: bool,
}

pub type Loss = Box<dyn Fn(&mut Graph, &ParamVars) -> Result<Var>>;

/// Dot the output with a fixed random tensor of the same shape.
fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let c = g.constant(weights.clone());
    let prod = g.mul(out, c)?;
    Ok(g.sum(prod))
}

fn projection_like(shape: &[usize], rng: &mut Rng) -> Tensor {
    normal_tensor(shape, 1.0, rng)
}

fn small_selector() -> SelectorConfig {
    SelectorConfig {
        encoder: EncoderConfig {
            lookback: 16,
            patch: 4,
            d_model: 8,
            subset: 3,
            resamples: 2,
        },
        model_encoder: ModelEncoderConfig {
            meta_dim: 6,
            topo_dim: 4,
            wl_iterations: 1,
            probe: crate::model_encoder::ProbeConfig {
                dim: 4,
                ..Default::default()
            },
        },
        scorer: ScorerConfig {
            n_experts: 2,
            router_hidden: 4,
            expert_hidden: 6,
            ..Default::default()
        },
    }
}

fn random_hub(k: usize, cfg: &ModelEncoderConfig, rng: &mut Rng) -> HubFeatures {
    HubFeatures {
        ids: (0..k).map(|i| format!("m{i}")).collect(),
        v_a: normal_tensor(&[k, cfg.meta_dim], 1.0, rng),
        v_t: normal_tensor(&[k, cfg.topo_dim], 0.5, rng),
        v_c: normal_tensor(&[k, cfg.func_dim()], 1.0, rng),
        normalization: HubNormalization {
            meta_mean: Vec::new(),
            meta_std: Vec::new(),
            func_mean: Vec::new(),
            func_std: Vec::new(),
        },
    }
}

/// Min-max normalized random targets, so both ends of `[0, 1]` occur.
fn random_targets(k: usize, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    raw.iter().map(|v| (v - lo) / (hi - lo).max(1e-12)).collect()
}

/// Parameters and scalar loss of one random instance.
pub fn instance(component: Component, rng: &mut Rng) -> Result<(ParamStore, Loss)> {
    let mut p = ParamStore::new();
    let loss: Loss = match component {
        Component::Softmax => {
            p.insert("x", normal_tensor(&[3, 5], 1.5, rng))?;
            let (c1, c2) = (projection_like(&[3, 5], rng), projection_like(&[3, 5], rng));
            Box::new(move |g, v| {
                let x = v.get("x")?;
                let s = g.softmax(x, 1)?;
                let ls = g.log_softmax(x, 0)?;
                let a = project(g, s, &c1)?;
                let b = project(g, ls, &c2)?;
                g.add(a, b)
            })
        }
        Component::Attention => {
            p.insert("q", normal_tensor(&[4, 6], 1.0, rng))?;
            p.insert("k", normal_tensor(&[5, 6], 1.0, rng))?;
            p.insert("v", normal_tensor(&[5, 3], 1.0, rng))?;
            let (c_out, c_w) = (projection_like(&[4, 3], rng), projection_like(&[4, 5], rng));
            Box::new(move |g, v| {
                let (out, w) = g.attention(v.get("q")?, v.get("k")?, v.get("v")?)?;
                let a = project(g, out, &c_out)?;
                let b = project(g, w, &c_w)?;
                g.add(a, b)
            })
        }
        Component::Mlp => {
            let acts = [Activation::Relu, Activation::Gelu, Activation::Tanh];
            let spec = MlpSpec::new("mlp", vec![3, 5, 4, 2], acts[rng.random_range(0..acts.len())]);
            spec.init(&mut p, rng)?;
            p.insert("x", normal_tensor(&[6, 3], 1.0, rng))?;
            let c = projection_like(&[6, 2], rng);
            Box::new(move |g, v| {
                let out = spec.forward(g, v, v.get("x")?)?;
                project(g, out, &c)
            })
        }
        Component::DataEncoder => {
            let cfg = small_selector().encoder;
            init_data_encoder(&mut p, &cfg, rng)?;
            let subset = normal_tensor(&[cfg.subset, cfg.lookback], 1.0, rng);
            let c = projection_like(&[cfg.n_patches(), cfg.d_model], rng);
            Box::new(move |g, v| {
                let e_d = encode_data_graph(g, v, &subset, &cfg)?;
                project(g, e_d, &c)
            })
        }
        Component::ModelEncoder => {
            let sel = small_selector();
            let k = rng.random_range(2..6);
            let hub = random_hub(k, &sel.model_encoder, rng);
            init_model_encoder(&mut p, &sel.model_encoder, sel.d_model(), rng)?;
            let c = projection_like(&[k, sel.d_model()], rng);
            Box::new(move |g, v| {
                let e_m = encode_hub_graph(g, v, &hub)?;
                project(g, e_m, &c)
            })
        }
        Component::Scorer => {
            let sel = small_selector();
            let (k, n_p, d) = (rng.random_range(2..6), sel.encoder.n_patches(), sel.d_model());
            p.insert("e_m", uniform_tensor(&[k, d], 0.0, 2.0, rng))?;
            p.insert("e_d", normal_tensor(&[n_p, d], 1.0, rng))?;
            init_scorer(&mut p, &sel.scorer, d, rng)?;
            let h = rng.random_range(1..=1000);
            let (c_s, c_w, c_a) = (
                projection_like(&[k, 1], rng),
                projection_like(&[1, sel.scorer.n_experts], rng),
                projection_like(&[k, n_p], rng),
            );
            Box::new(move |g, v| {
                let out = score_graph(g, v, v.get("e_m")?, v.get("e_d")?, h, &sel.scorer)?;
                let a = project(g, out.scores, &c_s)?;
                let b = project(g, out.weights, &c_w)?;
                let c = project(g, out.attention, &c_a)?;
                let ab = g.add(a, b)?;
                g.add(ab, c)
            })
        }
        Component::LossPredictionWeighted | Component::LossTruthWeighted => {
            let orientation = if component == Component::LossPredictionWeighted {
                LossOrientation::PredictionWeighted
            } else {
                LossOrientation::TruthWeighted
            };
            let k = rng.random_range(2..9);
            p.insert("r_hat", normal_tensor(&[k, 1], 1.0, rng))?;
            let r = random_targets(k, rng);
            let lambda = rng.random_range(0.0..1.0);
            Box::new(move |g, v| total_loss_graph(g, v.get("r_hat")?, &r, lambda, orientation))
        }
        Component::EndToEndPredictionWeighted | Component::EndToEndTruthWeighted => {
            let orientation = if component == Component::EndToEndPredictionWeighted {
                LossOrientation::PredictionWeighted
            } else {
                LossOrientation::TruthWeighted
            };
            let sel = small_selector();
            let k = rng.random_range(2..6);
            let hub = random_hub(k, &sel.model_encoder, rng);
            p = init_selector(&sel, rng)?;
            let n_subsets = rng.random_range(1..=2);
            let subsets: Vec<Tensor> = (0..n_subsets)
                .map(|_| normal_tensor(&[sel.encoder.subset, sel.encoder.lookback], 1.0, rng))
                .collect();
            let h = rng.random_range(1..=1000);
            let r = random_targets(k, rng);
            let lambda = rng.random_range(0.0..1.0);
            Box::new(move |g, v| {
                let out = forward_graph(g, v, &sel, &hub, &subsets, h)?;
                total_loss_graph(g, out.scores, &r, lambda, orientation)
            })
        }
    };
    // Zero biases can sit a ReLU exactly on its kink, where central
    // differences disagree with any one-sided derivative.
    for (name, t) in p.iter_mut() {
        if name.ends_with(".bias") {
            *t = normal_tensor(t.shape(), 0.1, rng);
        }
    }
    Ok((p, loss))
}

/// Error of one component instance; `inject_fault` perturbs the analytic side.
pub fn check_instance(component: Component, index: usize, cfg: &GradcheckConfig) -> Result<f64> {
    let mut rng = substream(cfg.seed, &format!("gradcheck/{component}/{index}"));
    let (params, loss) = instance(component, &mut rng)?;
    let mut pairs = gradient_pairs(loss, &params, cfg.epsilon, None, &mut rng)?;
    if cfg.inject_fault {
        for p in pairs.values_mut() {
            p.analytic.iter_mut().for_each(|a| *a *= 1.0 + 1e-3);
        }
    }
    Ok(norm_relative_error(&pairs))
}

/// One row per component; a component passes when every instance is
/// below `cfg.tolerance`.
pub fn run_gradcheck(components: &[Component], cfg: &GradcheckConfig) -> Result<Vec<GradcheckRow>> {
    if cfg.instances == 0 || !(cfg.epsilon > 0.0) {
        return Err(invalid!("gradcheck needs at least one instance and a positive epsilon"));
    }
    components
        .iter()
        .map(|&component| {
            let mut worst = (0.0f64, 0usize);
            for i in 0..cfg.instances {
                let err = check_instance(component, i, cfg)?;
                if err > worst.0 || err.is_nan() {
                    worst = (if err.is_nan() { f64::INFINITY } else { err }, i);
                }
            }
            Ok(GradcheckRow {
                component,
                instances: cfg.instances,
                max_error: worst.0,
                worst_instance: worst.1,
                passed: worst.0 < cfg.tolerance,
            })
        })
        .collect()
}
