//! First-order meta-learning over any per-sample differentiable objective.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::numerics::{adam_step, add_grads, scale_grads, AdamState, Grads, ParamStore};

/// One meta-learning task: adapt on `support`, evaluate on `query`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask<S> {
    pub support: Vec<S>,
    pub query: Vec<S>,
}

/// Mean loss and mean gradient over `batch`. Samples are evaluated in
/// parallel and reduced in batch order.
pub fn mean_loss_grad<S, F>(params: &ParamStore, batch: &[S], f: &F) -> Result<(f64, Grads)>
where
    S: Sync,
    F: Fn(&ParamStore, &S) -> Result<(f64, Grads)> + Sync,
{
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    let parts = batch.par_iter().map(|s| f(params, s)).collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grads = Grads::new();
    for (l, g) in &parts {
        loss += l;
        add_grads(&mut grads, g)?;
    }
    let n = batch.len() as f64;
    scale_grads(&mut grads, 1.0 / n);
    Ok((loss / n, grads))
}

fn check_finite(grads: &Grads) -> Result<()> {
    for (name, g) in grads {
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{name}` during adaptation")));
        }
    }
    Ok(())
}

/// `θ′ = θ − α·∇L_support`, repeated `steps` times with plain gradient
/// descent. `params` is not modified.
pub fn inner_adapt<S, F>(params: &ParamStore, support: &[S], alpha: f64, steps: usize, f: &F) -> Result<ParamStore>
where
    S: Sync,
    F: Fn(&ParamStore, &S) -> Result<(f64, Grads)> + Sync,
{
    let mut adapted = params.clone();
    if steps > 0 && support.is_empty() {
        return Err(invalid!("inner adaptation needs a non-empty support set"));
    }
    for _ in 0..steps {
        let (_, g) = mean_loss_grad(&adapted, support, f)?;
        check_finite(&g)?;
        adapted = adapted.sgd_updated(&g, alpha)?;
    }
    Ok(adapted)
}

/// First-order meta-gradient: `Σ_i ∇_{θ′_i} L_query(θ′_i)`, summed in task
/// order. Returns the mean query loss alongside.
pub fn meta_gradient<S, F>(params: &ParamStore, tasks: &[MetaTask<S>], alpha: f64, steps: usize, f: &F) -> Result<(f64, Grads)>
where
    S: Sync,
    F: Fn(&ParamStore, &S) -> Result<(f64, Grads)> + Sync,
{
    if tasks.is_empty() {
        return Err(invalid!("a meta step needs at least one task"));
    }
    let parts = tasks
        .par_iter()
        .map(|t| {
            let adapted = inner_adapt(params, &t.support, alpha, steps, f)?;
            mean_loss_grad(&adapted, &t.query, f)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grads = Grads::new();
    for (l, g) in &parts {
        loss += l;
        add_grads(&mut grads, g)?;
    }
    Ok((loss / tasks.len() as f64, grads))
}

/// One outer update: meta-gradient then an Adam step with rate `gamma`.
/// Returns the mean query loss before the update.
pub fn meta_step<S, F>(
    params: &mut ParamStore,
    adam: &mut AdamState,
    tasks: &[MetaTask<S>],
    alpha: f64,
    steps: usize,
    gamma: f64,
    f: &F,
) -> Result<f64>
where
    S: Sync,
    F: Fn(&ParamStore, &S) -> Result<(f64, Grads)> + Sync,
{
    let (loss, grads) = meta_gradient(params, tasks, alpha, steps, f)?;
    adam_step(params, &grads, adam, gamma)?;
    Ok(loss)
}

/// One empirical-risk update on the mean batch loss.
pub fn erm_step<S, F>(params: &mut ParamStore, adam: &mut AdamState, batch: &[S], gamma: f64, f: &F) -> Result<f64>
where
    S: Sync,
    F: Fn(&ParamStore, &S) -> Result<(f64, Grads)> + Sync,
{
    let (loss, grads) = mean_loss_grad(params, batch, f)?;
    adam_step(params, &grads, adam, gamma)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    // (w − target)²/2 for a scalar parameter `w`.
    fn quad(p: &ParamStore, target: &f64) -> Result<(f64, Grads)> {
        let w = p.get("w")?.data()[0];
        let mut g = Grads::new();
        g.insert("w".into(), Tensor::vector(vec![w - target])?);
        Ok(((w - target).powi(2) / 2.0, g))
    }

    fn store(w: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(vec![w]).unwrap()).unwrap();
        p
    }

    #[test]
    fn scalar_toy_step() {
        let p = store(0.0);
        let a = inner_adapt(&p, &[3.0], 0.1, 1, &quad).unwrap();
        assert!((a.get("w").unwrap().data()[0] - 0.3).abs() < 1e-15);
        assert_eq!(p.get("w").unwrap().data()[0], 0.0);
    }

    #[test]
    fn zero_rate_is_identity() {
        let p = store(1.25);
        let a = inner_adapt(&p, &[3.0, -1.0], 0.0, 3, &quad).unwrap();
        assert_eq!(a.snapshot().unwrap(), p.snapshot().unwrap());
    }

    #[test]
    fn duplicated_tasks_double_gradient() {
        let p = store(0.5);
        let t = MetaTask {
            support: vec![1.0],
            query: vec![2.0, 4.0],
        };
        let (_, g1) = meta_gradient(&p, std::slice::from_ref(&t), 0.1, 1, &quad).unwrap();
        let (_, g2) = meta_gradient(&p, &[t.clone(), t], 0.1, 1, &quad).unwrap();
        assert_eq!(g2["w"].data()[0], 2.0 * g1["w"].data()[0]);
    }

    #[test]
    fn nan_gradient_aborts() {
        let p = store(0.0);
        assert!(matches!(inner_adapt(&p, &[f64::NAN], 0.1, 1, &quad), Err(Error::NonFinite(_))));
    }
}
