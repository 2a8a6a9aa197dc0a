//! Split conformal and cross-conformal p-values and prediction sets.
//!
//! The conformity score is `s(y, z) = |y - f(z)|` for a fitted regression
//! model from the learners module. Rank counts use strict inequality
//! exactly as displayed, so ties break against inclusion.

use serde::Serialize;

use crate::cv_engine::fit_seed;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec, Model};

fn score(model: &Model, y: f64, z: &[f64]) -> f64 {
    (y - model.predict(z)).abs()
}

/// Split conformal p-value: fit on the first `n_tr` samples, calibrate on
/// the rest, with the `+1/(n_te+1)` smoothing term.
pub fn split_conformal_p(
    d: &Dataset,
    n_tr: usize,
    score_spec: &LearnerSpec,
    query_y: f64,
    query_z: &[f64],
    seed: u64,
) -> Result<f64> {
    let n = d.len();
    if n_tr == 0 || n_tr >= n {
        return Err(Error::invalid(
            "split conformal requires 1 <= n_tr < n",
        ));
    }
    if query_z.len() != d.dim() {
        return Err(Error::invalid("query dimension mismatch"));
    }
    let train = Dataset::new(d.samples()[..n_tr].to_vec())?;
    let model = learners::fit(score_spec, &train, seed)?;
    let n_te = n - n_tr;
    let s_query = score(&model, query_y, query_z);
    let mut count = 0usize;
    for i in n_tr..n {
        let s = d.sample(i);
        let y = s
            .y
            .ok_or_else(|| Error::invalid("conformity score requires responses"))?;
        if score(&model, y, &s.z) < s_query {
            count += 1;
        }
    }
    Ok((count as f64 + 1.0) / (n_te as f64 + 1.0))
}

/// Per-fold fitted score models, computed once and reused across queries.
pub struct CrossConformalScorer {
    models: Vec<Model>,
    plan: data::FoldPlan,
    calibration: Vec<Vec<f64>>, // per fold, scores of its held-out samples
}

impl CrossConformalScorer {
    pub fn fit(d: &Dataset, k: usize, score_spec: &LearnerSpec, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("cross conformal requires K >= 2"));
        }
        let plan = data::make_fold_plan(d.len(), k, None)?;
        let mut models = Vec::with_capacity(k);
        let mut calibration = Vec::with_capacity(k);
        for fold in 0..k {
            let train = data::leave_out(d, fold, &plan)?;
            let model =
                learners::fit(score_spec, &train, fit_seed(seed, fold, 0)).map_err(|e| {
                    Error::Fit {
                        fold,
                        learner: score_spec.label(),
                        message: e.to_string(),
                    }
                })?;
            let mut scores = Vec::with_capacity(plan.n_te());
            for &i in plan.fold_indices(fold) {
                let s = d.sample(i);
                let y = s
                    .y
                    .ok_or_else(|| Error::invalid("conformity score requires responses"))?;
                scores.push(score(&model, y, &s.z));
            }
            models.push(model);
            calibration.push(scores);
        }
        Ok(CrossConformalScorer {
            models,
            plan,
            calibration,
        })
    }

    /// `p_cc(y, z) = (1/K) sum_k (1/n_te) sum_{i in fold k} 1[s_i < s(y,z)]`.
    pub fn p_value(&self, y: f64, z: &[f64]) -> f64 {
        let k = self.plan.k();
        let n_te = self.plan.n_te() as f64;
        let mut acc = 0.0;
        for fold in 0..k {
            let s_query = score(&self.models[fold], y, z);
            let count = self.calibration[fold]
                .iter()
                .filter(|&&s| s < s_query)
                .count();
            acc += count as f64 / n_te;
        }
        acc / k as f64
    }
}

/// Cross-conformal p-value at a single query point.
pub fn cross_conformal_p(
    d: &Dataset,
    k: usize,
    score_spec: &LearnerSpec,
    query_y: f64,
    query_z: &[f64],
    seed: u64,
) -> Result<f64> {
    if query_z.len() != d.dim() {
        return Err(Error::invalid("query dimension mismatch"));
    }
    let scorer = CrossConformalScorer::fit(d, k, score_spec, seed)?;
    Ok(scorer.p_value(query_y, query_z))
}

/// A maximal run of grid values kept by the prediction set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Conformal output bundle.
#[derive(Clone, Debug, Serialize)]
pub struct ConformalResult {
    pub alpha: f64,
    pub k: usize,
    pub p_values: Vec<f64>,
    pub intervals: Vec<Interval>,
}

/// Grid-based cross-conformal prediction set at covariates `z`:
/// grid cells with `p_cc(y, z) <= 1 - alpha` merged into maximal
/// intervals. Fold fits are computed once and reused across the grid.
pub fn prediction_set(
    d: &Dataset,
    k: usize,
    score_spec: &LearnerSpec,
    z: &[f64],
    alpha: f64,
    y_grid: &[f64],
    seed: u64,
) -> Result<ConformalResult> {
    if y_grid.len() < 2 {
        return Err(Error::invalid("y grid needs at least 2 points"));
    }
    if y_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("y grid must be strictly increasing"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0,1]"));
    }
    if z.len() != d.dim() {
        return Err(Error::invalid("query dimension mismatch"));
    }
    let scorer = CrossConformalScorer::fit(d, k, score_spec, seed)?;
    let p_values: Vec<f64> = y_grid.iter().map(|&y| scorer.p_value(y, z)).collect();
    let mut intervals = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for (idx, &p) in p_values.iter().enumerate() {
        if p <= 1.0 - alpha {
            open = match open {
                None => Some((y_grid[idx], y_grid[idx])),
                Some((lo, _)) => Some((lo, y_grid[idx])),
            };
        } else if let Some((lo, hi)) = open.take() {
            intervals.push(Interval { lo, hi });
        }
    }
    if let Some((lo, hi)) = open {
        intervals.push(Interval { lo, hi });
    }
    Ok(ConformalResult {
        alpha,
        k,
        p_values,
        intervals,
    })
}
