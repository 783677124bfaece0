use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::{Grads, ParamStore};

/// Moment buffers and step counter for Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.second.get(name).map(Vec::as_slice)
    }
}

/// One bias-corrected Adam update. Parameters without an entry in `grads`
/// are treated as having a zero gradient.
pub fn adam_step(params: &mut ParamStore, grads: &Grads, state: &mut AdamState, lr: f64) -> Result<()> {
    for (name, g) in grads {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(shape_err!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (name, p) in params.iter_mut() {
        let n = p.len();
        let m = state.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n {
            return Err(shape_err!("optimizer state for `{name}` does not match parameter"));
        }
        let g = grads.get(name).map(|g| g.data());
        for i in 0..n {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
