use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{ops, Graph, Tensor, Var};

const Q_FLOOR: f64 = 1e-12;

/// Which distribution sits inside the logarithm of the ranking term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossOrientation {
    /// `−Σ p(r̂) log q(r)`.
    #[default]
    PredictionWeighted,
    /// `−Σ q(r) log p(r̂)`.
    TruthWeighted,
}

fn truth_softmax(r: &[f64]) -> Result<Vec<f64>> {
    let t = Tensor::new(vec![r.len(), 1], r.to_vec())?;
    Ok(ops::softmax(&t, 0)?.into_data())
}

/// Ranking term plus `λ·Σ (r − r̂)²` on `g`; `r_hat` holds the K predicted
/// scores in any 2-D column or row layout.
pub fn total_loss_graph(g: &mut Graph, r_hat: Var, r: &[f64], lambda: f64, orientation: LossOrientation) -> Result<Var> {
    let shape = g.value(r_hat).shape().to_vec();
    let k = g.value(r_hat).len();
    if k != r.len() {
        return Err(invalid!("{k} predicted scores vs {} ground-truth scores", r.len()));
    }
    if k < 2 {
        return Err(invalid!("the ranking loss needs at least two models"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid!("λ must be a finite non-negative number, got {lambda}"));
    }
    let axis = if shape[0] == k { 0 } else { 1 };
    let q = truth_softmax(r)?;
    let ranking = match orientation {
        LossOrientation::PredictionWeighted => {
            if q.iter().any(|v| *v < Q_FLOOR) {
                log::warn!("target softmax underflows; clamping log q at {Q_FLOOR:e}");
            }
            let neg_log_q: Vec<f64> = q.iter().map(|v| -v.max(Q_FLOOR).ln()).collect();
            let c = g.constant(Tensor::new(shape.clone(), neg_log_q)?);
            let p = g.softmax(r_hat, axis)?;
            let prod = g.mul(p, c)?;
            g.sum(prod)
        }
        LossOrientation::TruthWeighted => {
            let neg_q = g.constant(Tensor::new(shape.clone(), q.iter().map(|v| -v).collect())?);
            let log_p = g.log_softmax(r_hat, axis)?;
            let prod = g.mul(log_p, neg_q)?;
            g.sum(prod)
        }
    };
    let target = g.constant(Tensor::new(shape, r.to_vec())?);
    let diff = g.sub(target, r_hat)?;
    let sq = g.mul(diff, diff)?;
    let mse = g.sum(sq);
    let mse = g.scale(mse, lambda);
    g.add(ranking, mse)
}

pub fn total_loss(r_hat: &[f64], r: &[f64], lambda: f64, orientation: LossOrientation) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![r_hat.len().max(1), 1], r_hat.to_vec())?);
    let l = total_loss_graph(&mut g, x, r, lambda, orientation)?;
    g.value(l).item()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_leaves_entropy() {
        let r = [0.2, 0.9, 0.5];
        let q = truth_softmax(&r).unwrap();
        let entropy: f64 = -q.iter().map(|v| v * v.ln()).sum::<f64>();
        let l = total_loss(&r, &r, 0.7, LossOrientation::PredictionWeighted).unwrap();
        assert!((l - entropy).abs() < 1e-14);
    }

    #[test]
    fn lambda_zero_is_ranking_term() {
        let (rh, r) = ([0.3, -0.2, 1.0], [1.0, 0.0, 0.5]);
        let p = truth_softmax(&rh).unwrap();
        let q = truth_softmax(&r).unwrap();
        let expect: f64 = -p.iter().zip(&q).map(|(p, q)| p * q.ln()).sum::<f64>();
        assert!((total_loss(&rh, &r, 0.0, LossOrientation::PredictionWeighted).unwrap() - expect).abs() < 1e-14);
        let expect: f64 = -q.iter().zip(&p).map(|(q, p)| q * p.ln()).sum::<f64>();
        assert!((total_loss(&rh, &r, 0.0, LossOrientation::TruthWeighted).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(total_loss(&[1.0], &[1.0], 0.7, LossOrientation::PredictionWeighted).is_err());
        assert!(total_loss(&[1.0, 2.0], &[1.0], 0.7, LossOrientation::PredictionWeighted).is_err());
        assert!(total_loss(&[1.0, 2.0], &[1.0, 0.0], -1.0, LossOrientation::PredictionWeighted).is_err());
    }

    #[test]
    fn extreme_targets_stay_finite() {
        let l = total_loss(&[0.0, 0.0], &[0.0, 1e4], 0.7, LossOrientation::PredictionWeighted).unwrap();
        assert!(l.is_finite());
    }
}
