//! Forward-only conveniences over plain tensors. Each runs the same graph
//! kernels used during training.

use crate::error::Result;
use crate::numerics::{Activation, Graph, MlpSpec, ParamStore, Tensor};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
    let out = g.matmul(a, b)?;
    Ok(g.value(out).clone())
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(x.clone());
    let out = g.softmax(x, axis)?;
    Ok(g.value(out).clone())
}

/// `softmax(Q·Kᵀ/√d)·V`; returns the output and the attention matrix.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let (q, k, v) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let (out, attn) = g.attention(q, k, v)?;
    Ok((g.value(out).clone(), g.value(attn).clone()))
}

/// Apply a row-wise MLP whose layers live in `layers` under `prefix`.
pub fn mlp_forward(
    x: &Tensor,
    layers: &ParamStore,
    prefix: &str,
    dims: Vec<usize>,
    activation: Activation,
) -> Result<Tensor> {
    let spec = MlpSpec::new(prefix, dims, activation);
    let mut g = Graph::new();
    let vars = layers.bind(&mut g);
    let x = g.constant(x.clone());
    let out = spec.forward(&mut g, &vars, x)?;
    Ok(g.value(out).clone())
}
