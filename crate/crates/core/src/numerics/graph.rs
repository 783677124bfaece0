//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation of one forward pass in creation
//! order, which is already a topological order. [`Graph::backward`] walks
//! the tape in reverse and accumulates gradients into every tensor that
//! requires them. Graphs are cheap and meant to be rebuilt for each step.

use crate::error::{invalid, shape_err, Result};
use crate::numerics::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
    Tanh,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    Act(Var, Activation),
    Sum(Var),
    MeanOf(Vec<Var>),
    ConcatCols(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => gelu(x),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gelu_grad(x),
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

/// (outer, len, inner) decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn softmax_forward(x: &Tensor, axis: usize, log: bool) -> Tensor {
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..n {
                denom += (src[idx(j)] - max).exp();
            }
            if log {
                let lse = denom.ln();
                for j in 0..n {
                    out[idx(j)] = src[idx(j)] - max - lse;
                }
            } else {
                for j in 0..n {
                    out[idx(j)] = (src[idx(j)] - max).exp() / denom;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// `a · b` for row-major matrices. Each output row depends only on the
/// matching row of `a` and is reduced in a fixed order.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Sum that does not depend on the order of its inputs.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op) -> Var {
        let needs = match &op {
            Op::Leaf => value.requires_grad(),
            op => self.parents(op).iter().any(|p| self.nodes[p.0].value.requires_grad()),
        };
        value.set_requires_grad(needs);
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn parents(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::Transpose(a) | Op::Scale(a, _) | Op::Act(a, _) | Op::Sum(a) => vec![*a],
            Op::Softmax { x, .. } | Op::LogSoftmax { x, .. } => vec![*x],
            Op::MeanOf(v) | Op::ConcatCols(v) => v.clone(),
        }
    }

    /// Record a tensor as a leaf; it is differentiated if it requires grad.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Record a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad())
    }

    /// Record a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        t.zero_grad();
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].value.grad_tensor()
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        match self.value(v).shape() {
            [m, n] => Ok((*m, *n)),
            s => Err(shape_err!("expected a matrix, got shape {s:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(shape_err!("matmul of [{m}x{k}] by [{k2}x{n}]: inner dimensions differ"));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let out = transpose_raw(self.value(a).data(), m, n);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err!("{what}: shapes {sa:?} and {sb:?} differ"));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `a[m×n] + bias[n]`, broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if self.value(bias).len() != n {
            return Err(shape_err!(
                "bias of shape {:?} does not match {n} columns",
                self.value(bias).shape()
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            add_into(&mut out[i * n..(i + 1) * n], b);
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| c * x);
        self.push(t, Op::Scale(a, c))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let t = self.value(a).map(|x| act.apply(x));
        self.push(t, Op::Act(a, act))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(invalid!("softmax axis {axis} out of range for shape {:?}", t.shape()));
        }
        let t = softmax_forward(t, axis, false);
        Ok(self.push(t, Op::Softmax { x, axis }))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(invalid!("softmax axis {axis} out of range for shape {:?}", t.shape()));
        }
        let t = softmax_forward(t, axis, true);
        Ok(self.push(t, Op::LogSoftmax { x, axis }))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Element-wise mean of equal-shaped tensors. The result is exactly
    /// invariant to the order of `vars`.
    pub fn mean_of(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or_else(|| invalid!("mean of an empty list"))?;
        for v in &vars[1..] {
            self.same_shape(first, *v, "mean")?;
        }
        let shape = self.value(first).shape().to_vec();
        let n = self.value(first).len();
        let mut column = vec![0.0; vars.len()];
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            for (c, v) in column.iter_mut().zip(vars) {
                *c = self.value(*v).data()[i];
            }
            *o = order_free_sum(&mut column) / vars.len() as f64;
        }
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanOf(vars.to_vec())))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or_else(|| invalid!("concat of an empty list"))?;
        let (m, _) = self.dims(first)?;
        let mut widths = Vec::with_capacity(vars.len());
        for v in vars {
            let (mi, ni) = self.dims(*v)?;
            if mi != m {
                return Err(shape_err!("concat: {mi} rows vs {m} rows"));
            }
            widths.push(ni);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (v, w) in vars.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*v).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(Tensor::new(vec![m, total], out)?, Op::ConcatCols(vars.to_vec())))
    }

    /// Single-head scaled dot-product attention. Returns the output and the
    /// row-stochastic attention matrix.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
        let (_, d) = self.dims(q)?;
        let (p, dk) = self.dims(k)?;
        let (pv, _) = self.dims(v)?;
        if d != dk {
            return Err(shape_err!("attention: query width {d} vs key width {dk}"));
        }
        if p != pv {
            return Err(shape_err!("attention: {p} keys vs {pv} values"));
        }
        let kt = self.transpose(k)?;
        let logits = self.matmul(q, kt)?;
        let logits = self.scale(logits, 1.0 / (d as f64).sqrt());
        let attn = self.softmax(logits, 1)?;
        let out = self.matmul(attn, v)?;
        Ok((out, attn))
    }

    /// Propagate d(loss)/d(node) back through the tape. Gradients accumulate
    /// into every node that requires them until [`Graph::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].value.requires_grad() {
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            self.nodes[idx].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contribution: Vec<f64>| {
            if !self.nodes[v.0].value.requires_grad() {
                return;
            }
            match &mut adj[v.0] {
                Some(buf) => add_into(buf, &contribution),
                slot => *slot = Some(contribution),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a).unwrap();
                let n = self.value(*b).shape()[1];
                if self.value(*a).requires_grad() {
                    let bt = transpose_raw(val(*b), k, n);
                    send(*a, matmul_raw(g, &bt, m, n, k));
                }
                if self.value(*b).requires_grad() {
                    let at = transpose_raw(val(*a), m, k);
                    send(*b, matmul_raw(&at, g, k, m, n));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = self.dims(*a).unwrap();
                send(*a, transpose_raw(g, n, m));
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::AddBias(a, bias) => {
                let (m, n) = self.dims(*a).unwrap();
                let mut gb = vec![0.0; n];
                for i in 0..m {
                    add_into(&mut gb, &g[i * n..(i + 1) * n]);
                }
                send(*a, g.to_vec());
                send(*bias, gb);
            }
            Op::Scale(a, c) => send(*a, g.iter().map(|x| c * x).collect()),
            Op::Act(a, act) => {
                let x = val(*a);
                send(*a, g.iter().zip(x).map(|(g, x)| g * act.derivative(*x)).collect());
            }
            Op::Sum(a) => send(*a, vec![g[0]; self.value(*a).len()]),
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                send(*x, gx);
            }
            Op::LogSoftmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let total: f64 = (0..n).map(|j| g[idx(j)]).sum();
                        for j in 0..n {
                            gx[idx(j)] = g[idx(j)] - y[idx(j)].exp() * total;
                        }
                    }
                }
                send(*x, gx);
            }
            Op::MeanOf(vars) => {
                let inv = 1.0 / vars.len() as f64;
                for v in vars {
                    send(*v, g.iter().map(|x| x * inv).collect());
                }
            }
            Op::ConcatCols(vars) => {
                let m = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for v in vars {
                    let w = self.value(*v).shape()[1];
                    let mut part = Vec::with_capacity(m * w);
                    for i in 0..m {
                        part.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    send(*v, part);
                    offset += w;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 2.0]);
        g.zero_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let x = g.param(Tensor::vector(vec![3.0, 4.0]).unwrap());
        let p = g.mul(c, x).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn mean_of_is_order_free() {
        let vals = [1e16, 1.0, -1e16, 3.0, 0.5];
        let tensors: Vec<Tensor> = vals.iter().map(|&v| Tensor::scalar(v)).collect();
        let mut g = Graph::new();
        let fwd: Vec<Var> = tensors.iter().map(|t| g.constant(t.clone())).collect();
        let rev: Vec<Var> = fwd.iter().rev().copied().collect();
        let a = g.mean_of(&fwd).unwrap();
        let b = g.mean_of(&rev).unwrap();
        assert_eq!(g.value(a).data()[0].to_bits(), g.value(b).data()[0].to_bits());
    }

    #[test]
    fn concat_and_transpose_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 1]));
        let c = g.concat_cols(&[a, b]).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 4]);
        let t = g.transpose(c).unwrap();
        assert_eq!(g.value(t).shape(), &[4, 2]);
        let bad = g.constant(Tensor::zeros(&[3, 1]));
        assert!(g.concat_cols(&[a, bad]).is_err());
    }
}
