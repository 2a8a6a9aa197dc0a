//! CV model confidence sets (naive and difference-based) and
//! most-parsimonious selection.

use serde::Serialize;

use crate::cv_engine::{self, CvSummary, LossMatrix};
use crate::error::{Error, Result};
use crate::gauss::{QuantileEngine, Sided};
use crate::rng;

/// Construction used for a confidence set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum McsMethod {
    Naive,
    Difference,
}

/// Per-model diagnostics backing a membership decision.
#[derive(Clone, Debug, Serialize)]
pub struct ModelDiagnostic {
    pub index: usize,
    pub label: String,
    pub member: bool,
    /// Naive method: simultaneous interval for the model's CV target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Difference method: the max studentized difference bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_difference_bound: Option<f64>,
}

/// A set of model indices containing the CV risk minimizer with
/// asymptotic probability at least `1 - beta`.
#[derive(Clone, Debug, Serialize)]
pub struct ConfidenceSet {
    pub members: Vec<usize>,
    pub beta: f64,
    pub quantile_used: f64,
    pub method: McsMethod,
    pub per_model: Vec<ModelDiagnostic>,
    /// Set when every model had zero loss variance and the set degenerated
    /// to the exact argmin set.
    pub degenerate: bool,
}

impl ConfidenceSet {
    pub fn contains(&self, r: usize) -> bool {
        self.members.binary_search(&r).is_ok()
    }
}

fn argmin_indices(values: &[f64]) -> Vec<usize> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..values.len()).filter(|&r| values[r] == min).collect()
}

/// Naive model confidence set: keep `r` iff its simultaneous confidence
/// lower bound does not exceed the smallest simultaneous upper bound.
pub fn mcs_naive(
    summary: &CvSummary,
    n: usize,
    beta: f64,
    engine: &QuantileEngine,
    seed: u64,
) -> Result<ConfidenceSet> {
    let m = summary.r_hat.len();
    if m == 0 {
        return Err(Error::invalid("empty model set"));
    }
    let all_degenerate = summary.sigma_hat.iter().all(|&s| s <= 0.0);
    let gamma = crate::linalg::SquareMatrix::from_rows(
        &summary
            .gamma_hat
            .iter()
            .map(|row| row.clone())
            .collect::<Vec<_>>(),
    );
    let t = if all_degenerate {
        0.0
    } else {
        engine.quantile(&gamma, beta, Sided::Abs, seed)?
    };
    let sqrt_n = (n as f64).sqrt();
    let lower: Vec<f64> = (0..m)
        .map(|r| summary.r_hat[r] - summary.sigma_hat[r] / sqrt_n * t)
        .collect();
    let upper: Vec<f64> = (0..m)
        .map(|r| summary.r_hat[r] + summary.sigma_hat[r] / sqrt_n * t)
        .collect();
    let min_upper = upper.iter().cloned().fold(f64::INFINITY, f64::min);
    let members: Vec<usize> = if all_degenerate {
        argmin_indices(&summary.r_hat)
    } else {
        (0..m).filter(|&r| lower[r] <= min_upper).collect()
    };
    let per_model = (0..m)
        .map(|r| ModelDiagnostic {
            index: r,
            label: summary.labels.get(r).cloned().unwrap_or_default(),
            member: members.contains(&r),
            lower: Some(lower[r]),
            upper: Some(upper[r]),
            max_difference_bound: None,
        })
        .collect();
    Ok(ConfidenceSet {
        members,
        beta,
        quantile_used: t,
        method: McsMethod::Naive,
        per_model,
        degenerate: all_degenerate,
    })
}

/// Difference-based model confidence set: keep `r` iff the one-sided
/// simultaneous lower bound for `max_{s != r} (target_r - target_s)` is
/// nonpositive.
///
/// Zero-variance difference columns (identical or shifted models) enter
/// the max as raw differences with no studentized slack.
pub fn mcs_diff(
    l: &LossMatrix,
    n: usize,
    beta: f64,
    engine: &QuantileEngine,
    seed: u64,
) -> Result<ConfidenceSet> {
    let m = l.m();
    if m < 2 {
        return Err(Error::invalid("difference confidence set requires m >= 2"));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut members = Vec::new();
    let mut per_model = Vec::with_capacity(m);
    let mut last_quantile = 0.0;
    for r in 0..m {
        let diffs = cv_engine::diff_losses(l, r)?;
        let d_risk = cv_engine::cv_risk(&diffs);
        let d_sigma = cv_engine::sigma_hat(&diffs)?;
        let live: Vec<usize> = (0..diffs.m()).filter(|&s| d_sigma[s] > 0.0).collect();
        let u = if live.is_empty() {
            0.0
        } else {
            // Correlation among the positive-variance difference columns.
            let gamma_full = cv_engine::gamma_hat(&diffs, &d_sigma)?;
            let mut gamma = crate::linalg::SquareMatrix::zeros(live.len());
            for (a, &ia) in live.iter().enumerate() {
                for (b, &ib) in live.iter().enumerate() {
                    gamma[(a, b)] = gamma_full.matrix[(ia, ib)];
                }
            }
            engine.quantile(&gamma, beta, Sided::OneSided, rng::derive_seed(seed, &[r as u64]))?
        };
        last_quantile = u;
        let mut bound = f64::NEG_INFINITY;
        for s in 0..diffs.m() {
            let slack = if d_sigma[s] > 0.0 {
                d_sigma[s] / sqrt_n * u
            } else {
                0.0
            };
            bound = bound.max(d_risk[s] - slack);
        }
        let member = bound <= 0.0;
        if member {
            members.push(r);
        }
        per_model.push(ModelDiagnostic {
            index: r,
            label: l.labels[r].clone(),
            member,
            lower: None,
            upper: None,
            max_difference_bound: Some(bound),
        });
    }
    Ok(ConfidenceSet {
        members,
        beta,
        quantile_used: last_quantile,
        method: McsMethod::Difference,
        per_model,
        degenerate: false,
    })
}

/// Most parsimonious member of a confidence set; ties broken by the
/// smallest model index.
pub fn cvc_select(cs: &ConfidenceSet, complexity: &[usize]) -> Result<usize> {
    if cs.members.is_empty() {
        return Err(Error::invalid("confidence set is empty"));
    }
    for &r in &cs.members {
        if r >= complexity.len() {
            return Err(Error::invalid("complexity undefined for a member"));
        }
    }
    Ok(*cs
        .members
        .iter()
        .min_by_key(|&&r| (complexity[r], r))
        .expect("nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv_engine::LossMatrix;
    use crate::data::make_fold_plan;

    fn engine() -> QuantileEngine {
        QuantileEngine::new(50_000)
    }

    fn summary_from(r_hat: Vec<f64>, sigma_hat: Vec<f64>) -> CvSummary {
        let m = r_hat.len();
        let gamma: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        CvSummary {
            labels: (0..m).map(|r| format!("m{r}")).collect(),
            r_hat,
            sigma_hat,
            gamma_hat: gamma,
            zero_variance: vec![],
            r_bar: None,
            mu: None,
            tau_hat: None,
        }
    }

    #[test]
    fn single_model_is_kept() {
        let s = summary_from(vec![1.0], vec![0.5]);
        let cs = mcs_naive(&s, 100, 0.05, &engine(), 1).unwrap();
        assert_eq!(cs.members, vec![0]);
    }

    #[test]
    fn dominated_model_is_excluded() {
        // R = (0, 10), sigma = (1, 1), n = 100: with t near 1.96/2.24 the
        // second model's lower bound ~9.8 exceeds the first's upper ~0.2.
        let s = summary_from(vec![0.0, 10.0], vec![1.0, 1.0]);
        let cs = mcs_naive(&s, 100, 0.05, &engine(), 2).unwrap();
        assert_eq!(cs.members, vec![0]);
        let d = &cs.per_model[1];
        assert!(d.lower.unwrap() > cs.per_model[0].upper.unwrap());
    }

    #[test]
    fn all_zero_variance_degenerates_to_argmin() {
        let s = summary_from(vec![2.0, 1.0, 3.0], vec![0.0, 0.0, 0.0]);
        let cs = mcs_naive(&s, 50, 0.1, &engine(), 3).unwrap();
        assert!(cs.degenerate);
        assert_eq!(cs.members, vec![1]);
        assert_eq!(cs.quantile_used, 0.0);
    }

    fn matrix(cols: &[Vec<f64>]) -> LossMatrix {
        let n = cols[0].len();
        let m = cols.len();
        let mut entries = vec![0.0; n * m];
        for (r, col) in cols.iter().enumerate() {
            for i in 0..n {
                entries[i * m + r] = col[i];
            }
        }
        let k = if n % 2 == 0 { 2 } else { n };
        LossMatrix::from_entries(
            entries,
            n,
            m,
            (0..m).map(|r| format!("m{r}")).collect(),
            make_fold_plan(n, k, None).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_columns_both_kept() {
        let col = vec![1.0, 2.0, 0.5, 1.5];
        let l = matrix(&[col.clone(), col]);
        let cs = mcs_diff(&l, 4, 0.1, &engine(), 4).unwrap();
        assert_eq!(cs.members, vec![0, 1]);
    }

    #[test]
    fn constant_shift_is_deterministic_dominance() {
        let col: Vec<f64> = vec![1.0, 2.0, 0.5, 1.5];
        let shifted: Vec<f64> = col.iter().map(|v| v + 10.0).collect();
        let l = matrix(&[col, shifted]);
        let cs = mcs_diff(&l, 4, 0.1, &engine(), 5).unwrap();
        assert_eq!(cs.members, vec![0]);
    }

    #[test]
    fn diff_members_match_per_r_reference_loop() {
        // Simulated nested-regression style losses: three correlated
        // columns with different means.
        let mut r = crate::rng::stream(17, &[0]);
        use rand::Rng;
        let n = 40;
        let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for _ in 0..n {
            let base: f64 = r.gen_range(0.0..1.0);
            cols[0].push(base + r.gen_range(-0.1..0.1));
            cols[1].push(base + 0.05 + r.gen_range(-0.1..0.1));
            cols[2].push(base + 0.8 + r.gen_range(-0.1..0.1));
        }
        let l = matrix(&cols);
        let eng = engine();
        let cs = mcs_diff(&l, n, 0.1, &eng, 6).unwrap();
        // Reference: independent recomputation of each r's bound.
        let sqrt_n = (n as f64).sqrt();
        let mut expected = Vec::new();
        for r_idx in 0..3 {
            let diffs = cv_engine::diff_losses(&l, r_idx).unwrap();
            let means = cv_engine::cv_risk(&diffs);
            let sigmas = cv_engine::sigma_hat(&diffs).unwrap();
            let gamma = cv_engine::gamma_hat(&diffs, &sigmas).unwrap();
            let u = eng
                .quantile(
                    &gamma.matrix,
                    0.1,
                    Sided::OneSided,
                    rng::derive_seed(6, &[r_idx as u64]),
                )
                .unwrap();
            let bound = (0..2)
                .map(|s| means[s] - sigmas[s] / sqrt_n * u)
                .fold(f64::NEG_INFINITY, f64::max);
            if bound <= 0.0 {
                expected.push(r_idx);
            }
        }
        assert_eq!(cs.members, expected);
    }

    #[test]
    fn argmin_always_belongs() {
        // Exact invariant: the empirical argmin is in both sets whenever
        // the quantile is nonnegative.
        use rand::Rng;
        for seed in 0..20u64 {
            let mut r = crate::rng::stream(seed, &[8]);
            let n = 20;
            let m = 4;
            let cols: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
                .collect();
            let l = matrix(&cols);
            let summary = cv_engine::summarize(&l).unwrap();
            let argmin = argmin_indices(&summary.r_hat)[0];
            let naive = mcs_naive(&summary, n, 0.2, &engine(), seed).unwrap();
            assert!(naive.quantile_used >= 0.0);
            assert!(naive.contains(argmin), "naive seed {seed}");
            let diff = mcs_diff(&l, n, 0.2, &engine(), seed).unwrap();
            assert!(diff.contains(argmin), "diff seed {seed}");
        }
    }

    #[test]
    fn monotone_in_beta_with_shared_draws() {
        use rand::Rng;
        let mut r = crate::rng::stream(9, &[1]);
        let n = 20;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let l = matrix(&cols);
        let summary = cv_engine::summarize(&l).unwrap();
        let eng = engine();
        let wide = mcs_naive(&summary, n, 0.05, &eng, 7).unwrap();
        let narrow = mcs_naive(&summary, n, 0.3, &eng, 7).unwrap();
        for &m in &narrow.members {
            assert!(wide.contains(m));
        }
        let wide = mcs_diff(&l, n, 0.05, &eng, 7).unwrap();
        let narrow = mcs_diff(&l, n, 0.3, &eng, 7).unwrap();
        for &m in &narrow.members {
            assert!(wide.contains(m));
        }
    }

    #[test]
    fn cvc_picks_min_complexity_with_index_tie_break() {
        let cs = ConfidenceSet {
            members: vec![0, 1, 2],
            beta: 0.1,
            quantile_used: 1.0,
            method: McsMethod::Naive,
            per_model: vec![],
            degenerate: false,
        };
        assert_eq!(cvc_select(&cs, &[2, 1, 1]).unwrap(), 1);
        let single = ConfidenceSet {
            members: vec![2],
            ..cs.clone()
        };
        assert_eq!(cvc_select(&single, &[5, 5, 5]).unwrap(), 2);
        let empty = ConfidenceSet {
            members: vec![],
            ..cs
        };
        assert!(cvc_select(&empty, &[1]).is_err());
    }
}
