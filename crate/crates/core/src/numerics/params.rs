use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{Activation, Graph, Tensor, Var};
use crate::rng::Rng;

/// Named trainable tensors, iterated in lexicographic name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

/// Gradients keyed by parameter name.
pub type Grads = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(invalid!("duplicate parameter name `{name}`"));
        }
        self.params.insert(name, tensor.with_requires_grad());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| invalid!("missing parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| invalid!("missing parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Merge `other` into `self`; names must not collide.
    pub fn extend(&mut self, other: ParamStore) -> Result<()> {
        for (k, v) in other.params {
            self.insert(k, v)?;
        }
        Ok(())
    }

    /// Record every parameter as a trainable leaf on `graph`.
    pub fn bind(&self, graph: &mut Graph) -> ParamVars {
        ParamVars {
            vars: self
                .params
                .iter()
                .map(|(k, t)| {
                    let mut t = t.clone();
                    t.zero_grad();
                    (k.clone(), graph.param(t))
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.iter().try_for_each(|(k, t)| t.validate(k))
    }

    /// `self - step · grads`, leaving `self` untouched.
    pub fn sgd_updated(&self, grads: &Grads, step: f64) -> Result<ParamStore> {
        let mut out = self.clone();
        for (name, p) in out.params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != p.shape() {
                return Err(shape_err!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                ));
            }
            p.data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(w, g)| *w -= step * g);
        }
        Ok(out)
    }

    pub fn round_to_f32(&mut self) {
        self.params.values_mut().for_each(Tensor::round_to_f32);
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| invalid!("missing parameter `{name}`"))
    }

    /// Collect the gradients accumulated on `graph`; parameters the loss
    /// did not reach get zero gradients.
    pub fn grads(&self, graph: &Graph) -> Grads {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = graph
                    .grad(*v)
                    .unwrap_or_else(|| Tensor::zeros(graph.value(*v).shape()));
                (k.clone(), g)
            })
            .collect()
    }
}

pub fn add_grads(acc: &mut Grads, other: &Grads) -> Result<()> {
    for (k, g) in other {
        match acc.get_mut(k) {
            Some(a) => {
                if a.shape() != g.shape() {
                    return Err(shape_err!("gradient `{k}`: {:?} vs {:?}", a.shape(), g.shape()));
                }
                a.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
            }
            None => {
                acc.insert(k.clone(), g.clone());
            }
        }
    }
    Ok(())
}

pub fn scale_grads(grads: &mut Grads, c: f64) {
    for g in grads.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= c);
    }
}

/// Gaussian tensor with standard deviation `std`.
pub fn normal_tensor(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = std * z;
    }
    t
}

pub fn uniform_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(lo..hi);
    }
    t
}

/// Weight matrix `[fan_in × fan_out]` scaled by `1/sqrt(fan_in)`.
pub fn init_weight(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    normal_tensor(&[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Row-wise multilayer perceptron: affine layers with an activation between
/// them (none after the last). Parameters are stored as
/// `{prefix}.{i}.weight` (`[in × out]`) and `{prefix}.{i}.bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub prefix: String,
    pub dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(prefix: impl Into<String>, dims: Vec<usize>, activation: Activation) -> Self {
        MlpSpec {
            prefix: prefix.into(),
            dims,
            activation,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        for (i, w) in self.dims.windows(2).enumerate() {
            store.insert(self.weight_name(i), init_weight(w[0], w[1], rng))?;
            store.insert(self.bias_name(i), Tensor::zeros(&[w[1]]))?;
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, vars: &ParamVars, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.n_layers();
        for layer in 0..last {
            let w = vars.get(&self.weight_name(layer))?;
            let b = vars.get(&self.bias_name(layer))?;
            let in_width = g.value(h).dims2()?.1;
            let wshape = g.value(w).shape().to_vec();
            if wshape.len() != 2 || wshape[0] != in_width {
                return Err(shape_err!(
                    "layer `{}` expects input width {} but receives {in_width}",
                    self.weight_name(layer),
                    wshape.first().copied().unwrap_or(0)
                ));
            }
            if g.value(b).len() != wshape[1] {
                return Err(shape_err!(
                    "layer `{}` has {} outputs but bias of length {}",
                    self.bias_name(layer),
                    wshape[1],
                    g.value(b).len()
                ));
            }
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if layer + 1 < last {
                h = g.activation(h, self.activation);
            }
        }
        Ok(h)
    }
}
