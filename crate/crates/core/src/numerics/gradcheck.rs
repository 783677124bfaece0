use std::collections::BTreeMap;

use crate::error::Result;
use crate::numerics::{Graph, ParamStore, ParamVars, Var};
use crate::rng::Rng;
use rand::seq::index::sample;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if !analytic.is_finite() || !numeric.is_finite() {
        return f64::INFINITY;
    }
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Evaluate `f` on a fresh graph and return its scalar value.
pub fn eval_scalar<F>(params: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamVars) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let loss = f(&mut g, &vars)?;
    g.value(loss).item()
}

/// Analytic and central-difference derivatives at the same coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientPair {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradientPair {
    /// Largest per-coordinate relative error.
    pub fn max_relative_error(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| relative_error(*a, *n))
            .fold(0.0, |m, e| if e.is_nan() { f64::INFINITY } else { m.max(e) })
    }
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)` over every coordinate of every parameter, with
/// the denominator floored at `1e-8`.
pub fn norm_relative_error(pairs: &BTreeMap<String, GradientPair>) -> f64 {
    let (mut diff, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for p in pairs.values() {
        for (a, n) in p.analytic.iter().zip(&p.numeric) {
            if !a.is_finite() || !n.is_finite() {
                return f64::INFINITY;
            }
            diff += (a - n) * (a - n);
            a2 += a * a;
            n2 += n * n;
        }
    }
    diff.sqrt() / (a2.sqrt() + n2.sqrt()).max(1e-8)
}

/// Reverse-mode gradients of `f` next to central differences, per
/// parameter. With `max_coords`, at most that many coordinates of each
/// parameter are probed, chosen by `rng`.
pub fn gradient_pairs<F>(
    f: F,
    params: &ParamStore,
    epsilon: f64,
    max_coords: Option<usize>,
    rng: &mut Rng,
) -> Result<BTreeMap<String, GradientPair>>
where
    F: Fn(&mut Graph, &ParamVars) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic = vars.grads(&g);

    let mut out = BTreeMap::new();
    for (name, tensor) in params.iter() {
        let n = tensor.len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < n => {
                let mut c = sample(rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut pair = GradientPair::default();
        let mut probe = params.clone();
        for i in coords {
            let orig = tensor.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + epsilon;
            let up = eval_scalar(&probe, &f)?;
            probe.get_mut(name)?.data_mut()[i] = orig - epsilon;
            let down = eval_scalar(&probe, &f)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            pair.coords.push(i);
            pair.analytic.push(analytic[name].data()[i]);
            pair.numeric.push((up - down) / (2.0 * epsilon));
        }
        out.insert(name.clone(), pair);
    }
    Ok(out)
}

/// Compare reverse-mode gradients of `f` against central differences.
///
/// Returns the maximum relative error per parameter. Non-finite values on
/// either side report `+inf`.
pub fn grad_check<F>(
    f: F,
    params: &ParamStore,
    epsilon: f64,
    max_coords: Option<usize>,
    rng: &mut Rng,
) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&mut Graph, &ParamVars) -> Result<Var>,
{
    Ok(gradient_pairs(f, params, epsilon, max_coords, rng)?
        .into_iter()
        .map(|(k, p)| (k, p.max_relative_error()))
        .collect())
}
