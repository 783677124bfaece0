//! Rank-agreement metrics: Kendall's τ, weighted τ_ω, and Pr(top-k), plus
//! the per-case evaluation report.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(invalid!(
            "predicted scores have length {}, ground truth {}",
            pred.len(),
            truth.len()
        ));
    }
    if truth.len() < 2 {
        return Err(invalid!("rank correlation needs at least two models"));
    }
    Ok(())
}

/// Plain Kendall's τ: `2/(K(K-1)) Σ_{i<j} sgn(r_i-r_j) sgn(r̂_i-r̂_j)`.
/// Tied pairs contribute zero.
pub fn kendall_tau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let k = truth.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            acc += sgn(truth[i] - truth[j]) * sgn(pred[i] - pred[j]);
        }
    }
    Ok(2.0 * acc / (k * (k - 1)) as f64)
}

/// Zero-based ranks in descending order of `values`; tied entries share
/// the average of the ranks they span.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Which ranking supplies the hyperbolic pair weights of τ_ω.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBy {
    #[default]
    GroundTruth,
    Predicted,
}

/// One pair's share of τ_ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairContribution {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub concordance: f64,
}

/// Weighted Kendall's τ with additive hyperbolic weights
/// `w_ij = 1/(ρ_i+1) + 1/(ρ_j+1)`, where ρ are zero-based descending ranks.
pub fn weighted_kendall_tau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    weighted_kendall_tau_by(pred, truth, WeightBy::GroundTruth)
}

pub fn weighted_kendall_tau_by(pred: &[f64], truth: &[f64], by: WeightBy) -> Result<f64> {
    let pairs = weighted_pairs(pred, truth, by)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in &pairs {
        num += p.weight * p.concordance;
        den += p.weight;
    }
    Ok(num / den)
}

fn weighted_pairs(pred: &[f64], truth: &[f64], by: WeightBy) -> Result<Vec<PairContribution>> {
    check_pair(pred, truth)?;
    let ranks = match by {
        WeightBy::GroundTruth => descending_ranks(truth),
        WeightBy::Predicted => descending_ranks(pred),
    };
    let k = truth.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            out.push(PairContribution {
                i,
                j,
                weight: 1.0 / (ranks[i] + 1.0) + 1.0 / (ranks[j] + 1.0),
                concordance: sgn(truth[i] - truth[j]) * sgn(pred[i] - pred[j]),
            });
        }
    }
    Ok(out)
}

/// τ, τ_ω and, on request, the per-pair table behind τ_ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankEval {
    pub tau: f64,
    pub tau_w: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairContribution>>,
}

pub fn rank_eval(pred: &[f64], truth: &[f64], with_pairs: bool) -> Result<RankEval> {
    let tau = kendall_tau(pred, truth)?;
    let tau_w = weighted_kendall_tau(pred, truth)?;
    let pairs = if with_pairs {
        Some(weighted_pairs(pred, truth, WeightBy::GroundTruth)?)
    } else {
        None
    };
    Ok(RankEval { tau, tau_w, pairs })
}

/// Model indices by descending score; ties keep index order.
pub fn ranking_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Index of the best score (first on ties).
pub fn argmax(scores: &[f64]) -> usize {
    ranking_from_scores(scores)[0]
}

/// Fraction of cases whose truly best model is among the first `k`
/// predicted models. `k` larger than the hub is clamped.
pub fn pr_top_k(predicted_rankings: &[Vec<usize>], truth_scores: &[Vec<f64>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    if predicted_rankings.is_empty() {
        return Err(invalid!("no evaluation cases"));
    }
    if predicted_rankings.len() != truth_scores.len() {
        return Err(invalid!(
            "{} rankings but {} ground-truth vectors",
            predicted_rankings.len(),
            truth_scores.len()
        ));
    }
    let hits = predicted_rankings
        .iter()
        .zip(truth_scores)
        .filter(|(ranking, truth)| {
            let best = argmax(truth);
            ranking.iter().take(k.min(ranking.len())).any(|&m| m == best)
        })
        .count();
    Ok(hits as f64 / predicted_rankings.len() as f64)
}

/// One evaluated (dataset, horizon) case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset_id: String,
    pub horizon: usize,
    pub tau: f64,
    pub tau_w: f64,
    pub predicted_top3: Vec<String>,
    pub true_top1: String,
    pub predicted_scores: Vec<f64>,
    pub truth_scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_cases: usize,
    pub mean_tau: f64,
    pub mean_tau_w: f64,
    /// Pr(top-k) for k = 1..=K.
    pub pr_top_k: Vec<f64>,
    pub pr_top1: f64,
    pub pr_top2: f64,
    pub pr_top3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_ids: Vec<String>,
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
}

impl EvalReport {
    /// Score each case with `predict` and collect metrics.
    pub fn build<'a, I, F>(model_ids: &[String], cases: I, mut predict: F) -> Result<EvalReport>
    where
        I: IntoIterator<Item = (&'a str, usize, &'a [f64])>,
        F: FnMut(&str, usize) -> Result<Vec<f64>>,
    {
        let mut rows = Vec::new();
        for (dataset_id, horizon, truth) in cases {
            let pred = predict(dataset_id, horizon)?;
            let ev = rank_eval(&pred, truth, false)?;
            let ranking = ranking_from_scores(&pred);
            rows.push(EvalRow {
                dataset_id: dataset_id.to_string(),
                horizon,
                tau: ev.tau,
                tau_w: ev.tau_w,
                predicted_top3: ranking.iter().take(3).map(|&i| model_ids[i].clone()).collect(),
                true_top1: model_ids[argmax(truth)].clone(),
                predicted_scores: pred,
                truth_scores: truth.to_vec(),
            });
        }
        let summary = summarize(&rows, model_ids.len())?;
        Ok(EvalReport {
            model_ids: model_ids.to_vec(),
            rows,
            summary,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset_id", "horizon", "tau", "tau_w", "predicted_top3", "true_top1"])?;
        for r in &self.rows {
            w.write_record([
                r.dataset_id.clone(),
                r.horizon.to_string(),
                format!("{:.17e}", r.tau),
                format!("{:.17e}", r.tau_w),
                r.predicted_top3.join(";"),
                r.true_top1.clone(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn summarize(rows: &[EvalRow], k_models: usize) -> Result<EvalSummary> {
    if rows.is_empty() {
        return Err(invalid!("no evaluation cases"));
    }
    let n = rows.len() as f64;
    let rankings: Vec<Vec<usize>> = rows.iter().map(|r| ranking_from_scores(&r.predicted_scores)).collect();
    let truths: Vec<Vec<f64>> = rows.iter().map(|r| r.truth_scores.clone()).collect();
    let pr = (1..=k_models.max(1))
        .map(|k| pr_top_k(&rankings, &truths, k))
        .collect::<Result<Vec<_>>>()?;
    let at = |k: usize| pr[(k - 1).min(pr.len() - 1)];
    Ok(EvalSummary {
        n_cases: rows.len(),
        mean_tau: rows.iter().map(|r| r.tau).sum::<f64>() / n,
        mean_tau_w: rows.iter().map(|r| r.tau_w).sum::<f64>() / n,
        pr_top1: at(1),
        pr_top2: at(2),
        pr_top3: at(3),
        pr_top_k: pr,
    })
}
