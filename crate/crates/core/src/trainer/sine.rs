//! Sine-family regression: the classic check that first-order meta-learning
//! yields an initialization which adapts faster than a random one.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{Activation, AdamState, Graph, Grads, MlpSpec, ParamStore, Tensor};
use crate::rng::{substream, Rng};
use crate::trainer::{inner_adapt, mean_loss_grad, meta_step, MetaTask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SineConfig {
    pub hidden: usize,
    /// Points per support (and training query) set.
    pub shots: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub meta_iterations: usize,
    pub tasks_per_batch: usize,
    pub eval_tasks: usize,
    pub eval_points: usize,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            hidden: 40,
            shots: 10,
            inner_lr: 0.01,
            outer_lr: 0.003,
            meta_iterations: 3000,
            tasks_per_batch: 5,
            eval_tasks: 200,
            eval_points: 100,
        }
    }
}

/// A batch of `(x, y)` points from one sine task.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    pub x: Tensor,
    pub y: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct SineTask {
    amplitude: f64,
    phase: f64,
}

impl SineTask {
    fn draw(rng: &mut Rng) -> Self {
        SineTask {
            amplitude: rng.random_range(0.1..5.0),
            phase: rng.random_range(0.0..PI),
        }
    }

    fn points(&self, n: usize, rng: &mut Rng) -> Points {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ys = xs.iter().map(|x| self.amplitude * (x + self.phase).sin()).collect();
        Points {
            x: Tensor::new(vec![n, 1], xs).expect("n > 0"),
            y: Tensor::new(vec![n, 1], ys).expect("n > 0"),
        }
    }
}

fn net(cfg: &SineConfig) -> MlpSpec {
    MlpSpec::new("sine", vec![1, cfg.hidden, 1], Activation::Tanh)
}

/// Mean squared error of the network on `pts` and its gradient.
pub fn sine_loss_grad(params: &ParamStore, pts: &Points, cfg: &SineConfig) -> Result<(f64, Grads)> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let x = g.constant(pts.x.clone());
    let y = g.constant(pts.y.clone());
    let out = net(cfg).forward(&mut g, &vars, x)?;
    let diff = g.sub(out, y)?;
    let sq = g.mul(diff, diff)?;
    let s = g.sum(sq);
    let loss = g.scale(s, 1.0 / pts.x.len() as f64);
    g.backward(loss)?;
    Ok((g.value(loss).item()?, vars.grads(&g)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationGain {
    /// Mean post-adaptation MSE from the random initialization.
    pub pre: f64,
    /// Mean post-adaptation MSE from the meta-learned initialization.
    pub post: f64,
}

/// Mean query MSE after one inner step on each evaluation task.
fn one_step_mse(params: &ParamStore, tasks: &[(Points, Points)], cfg: &SineConfig) -> Result<f64> {
    let f = |p: &ParamStore, pts: &Points| sine_loss_grad(p, pts, cfg);
    let mut total = 0.0;
    for (support, query) in tasks {
        let adapted = inner_adapt(params, std::slice::from_ref(support), cfg.inner_lr, 1, &f)?;
        total += mean_loss_grad(&adapted, std::slice::from_ref(query), &f)?.0;
    }
    Ok(total / tasks.len() as f64)
}

/// Meta-train from a random initialization and compare one-step
/// adaptation error before and after, on the same held-out tasks.
pub fn sine_adaptation_gain(seed: u64, cfg: &SineConfig) -> Result<AdaptationGain> {
    let mut init_rng = substream(seed, "init");
    let mut params = ParamStore::new();
    net(cfg).init(&mut params, &mut init_rng)?;

    let mut eval_rng = substream(seed, "eval");
    let eval: Vec<(Points, Points)> = (0..cfg.eval_tasks)
        .map(|_| {
            let t = SineTask::draw(&mut eval_rng);
            (t.points(cfg.shots, &mut eval_rng), t.points(cfg.eval_points, &mut eval_rng))
        })
        .collect();
    let pre = one_step_mse(&params, &eval, cfg)?;

    let f = |p: &ParamStore, pts: &Points| sine_loss_grad(p, pts, cfg);
    let mut adam = AdamState::default();
    let mut rng = substream(seed, "tasks");
    for _ in 0..cfg.meta_iterations {
        let tasks: Vec<MetaTask<Points>> = (0..cfg.tasks_per_batch)
            .map(|_| {
                let t = SineTask::draw(&mut rng);
                MetaTask {
                    support: vec![t.points(cfg.shots, &mut rng)],
                    query: vec![t.points(cfg.shots, &mut rng)],
                }
            })
            .collect();
        meta_step(&mut params, &mut adam, &tasks, cfg.inner_lr, 1, cfg.outer_lr, &f)?;
    }
    let post = one_step_mse(&params, &eval, cfg)?;
    Ok(AdaptationGain { pre, post })
}
