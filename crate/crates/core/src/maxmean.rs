//! The cross-validated softmax test for the maximum of a mean vector,
//! its variance estimate and confidence lower bound, data-driven
//! temperature selection, and the argmin confidence set built on it.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

/// Dense n x m data matrix for the many-means workflow.
#[derive(Clone, Debug, PartialEq)]
pub struct MeansMatrix {
    data: Vec<f64>, // row-major
    n: usize,
    m: usize,
}

impl MeansMatrix {
    pub fn new(data: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 || data.len() != n * m {
            return Err(Error::invalid("matrix shape mismatch"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite entries"));
        }
        Ok(MeansMatrix { data, n, m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        let m = rows[0].len();
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::invalid("ragged matrix rows"));
            }
            data.extend_from_slice(row);
        }
        MeansMatrix::new(data, n, m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entry(&self, i: usize, s: usize) -> f64 {
        self.data[i * self.m + s]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for i in 0..self.n {
            for s in 0..self.m {
                out[s] += self.entry(i, s);
            }
        }
        for v in &mut out {
            *v /= self.n as f64;
        }
        out
    }

    /// Per-r difference matrix: entry (i, s) = X[i, r] - X[i, s], s != r.
    pub fn difference_matrix(&self, r: usize) -> Result<MeansMatrix> {
        if self.m < 2 {
            return Err(Error::invalid("difference matrix requires m >= 2"));
        }
        if r >= self.m {
            return Err(Error::invalid("column index out of range"));
        }
        let mut data = Vec::with_capacity(self.n * (self.m - 1));
        for i in 0..self.n {
            let xr = self.entry(i, r);
            for s in 0..self.m {
                if s != r {
                    data.push(xr - self.entry(i, s));
                }
            }
        }
        MeansMatrix::new(data, self.n, self.m - 1)
    }
}

/// Exponential-mechanism weights `w_s ∝ exp(lambda * means_s)`, computed
/// with max-subtraction so overflow is impossible.
pub fn softmax_weights(means: &[f64], lambda: f64) -> Vec<f64> {
    let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = means.iter().map(|&v| (lambda * (v - max)).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// The leave-one-out softmax statistic and its studentization pieces.
#[derive(Clone, Debug, Serialize)]
pub struct SoftmaxState {
    pub lambda: f64,
    pub q_values: Vec<f64>,
    pub t_stat: f64,
    pub sigma_hat: f64,
}

/// Compute `T_n = (1/n) sum_i sum_s w_s^{(-i)} X_{i,s}` with weights from
/// the leave-one-out means (exact rank-one downdate) and `sigma_hat` the
/// population standard deviation of the per-row values `Q_i`.
pub fn loo_statistic(x: &MeansMatrix, lambda: f64) -> Result<SoftmaxState> {
    if x.n() < 2 {
        return Err(Error::invalid("leave-one-out statistic requires n >= 2"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let n = x.n();
    let m = x.m();
    let totals: Vec<f64> = {
        let mut t = vec![0.0; m];
        for i in 0..n {
            for s in 0..m {
                t[s] += x.entry(i, s);
            }
        }
        t
    };
    let mut q_values = Vec::with_capacity(n);
    let mut loo_means = vec![0.0; m];
    for i in 0..n {
        for s in 0..m {
            loo_means[s] = (totals[s] - x.entry(i, s)) / (n - 1) as f64;
        }
        let w = softmax_weights(&loo_means, lambda);
        let q: f64 = w
            .iter()
            .zip(x.row(i))
            .map(|(wi, xi)| wi * xi)
            .sum();
        q_values.push(q);
    }
    let t_stat = stats::mean(&q_values);
    let sigma_hat = stats::population_variance(&q_values).sqrt();
    Ok(SoftmaxState {
        lambda,
        q_values,
        t_stat,
        sigma_hat,
    })
}

/// Outcome of the one-sided max-mean test.
#[derive(Clone, Debug, Serialize)]
pub struct MaxMeanTest {
    pub reject: bool,
    pub lower_bound: f64,
    pub threshold: f64,
    pub degenerate: bool,
}

/// Reject `H0: max theta <= 0` iff `T_n >= (sigma/sqrt(n)) z_{1-beta}`;
/// the returned lower bound covers `max theta` with asymptotic
/// probability `1 - beta`.
pub fn test_max_mean(state: &SoftmaxState, n: usize, beta: f64) -> Result<MaxMeanTest> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta must lie in (0,1)"));
    }
    if state.sigma_hat <= 0.0 {
        return Ok(MaxMeanTest {
            reject: state.t_stat > 0.0,
            lower_bound: state.t_stat,
            threshold: 0.0,
            degenerate: true,
        });
    }
    let z = stats::normal_quantile(1.0 - beta);
    let threshold = state.sigma_hat / (n as f64).sqrt() * z;
    Ok(MaxMeanTest {
        reject: state.t_stat >= threshold,
        lower_bound: state.t_stat - threshold,
        threshold,
        degenerate: false,
    })
}

/// Result of the leave-two-out temperature selection.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaSelection {
    pub candidates: Vec<f64>,
    pub delta_sq: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub epsilon: f64,
    pub chosen: f64,
    /// No candidate passed the stability rule; the smallest one was used.
    pub fallback: bool,
}

/// Pick the largest candidate temperature whose leave-two-out bootstrap
/// instability satisfies `n * delta^2(lambda) <= epsilon * sigma^2(lambda)`.
///
/// The `b` index triplets `(i, j, l)` are sampled without replacement
/// within a triplet and with replacement across triplets, and are shared
/// across candidates.
pub fn select_lambda(
    x: &MeansMatrix,
    candidates: &[f64],
    epsilon: f64,
    b: usize,
    seed: u64,
) -> Result<LambdaSelection> {
    if x.n() < 3 {
        return Err(Error::invalid("lambda selection requires n >= 3"));
    }
    if candidates.is_empty() {
        return Err(Error::invalid("candidate set must be nonempty"));
    }
    if candidates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("candidates must be sorted ascending"));
    }
    if b < 100 {
        return Err(Error::invalid("lambda selection requires at least 100 triplets"));
    }
    let n = x.n();
    let m = x.m();
    let grand = x.col_means();
    let totals: Vec<f64> = grand.iter().map(|g| g * n as f64).collect();
    let mut r = rng::stream(seed, &[0x6c32_6f]);
    let triplets: Vec<(usize, usize, usize)> = (0..b)
        .map(|_| {
            let i = r.gen_range(0..n);
            let j = loop {
                let v = r.gen_range(0..n);
                if v != i {
                    break v;
                }
            };
            let l = loop {
                let v = r.gen_range(0..n);
                if v != i && v != j {
                    break v;
                }
            };
            (i, j, l)
        })
        .collect();
    let mut delta_sq = Vec::with_capacity(candidates.len());
    let mut sigma_sq = Vec::with_capacity(candidates.len());
    let mut loo2 = vec![0.0; m];
    for &lambda in candidates {
        let mut acc = 0.0;
        for &(i, j, l) in &triplets {
            // Leave-two-out means excluding (i, j) and (i, l).
            for s in 0..m {
                loo2[s] = (totals[s] - x.entry(i, s) - x.entry(j, s)) / (n - 2) as f64;
            }
            let w_ij = softmax_weights(&loo2, lambda);
            for s in 0..m {
                loo2[s] = (totals[s] - x.entry(i, s) - x.entry(l, s)) / (n - 2) as f64;
            }
            let w_il = softmax_weights(&loo2, lambda);
            let mut d = 0.0;
            for s in 0..m {
                d += (w_ij[s] - w_il[s]) * (x.entry(i, s) - grand[s]);
            }
            acc += d * d;
        }
        delta_sq.push(acc / b as f64);
        sigma_sq.push(loo_statistic(x, lambda)?.sigma_hat.powi(2));
    }
    let mut chosen = None;
    for idx in (0..candidates.len()).rev() {
        if n as f64 * delta_sq[idx] <= epsilon * sigma_sq[idx] {
            chosen = Some(candidates[idx]);
            break;
        }
    }
    let fallback = chosen.is_none();
    Ok(LambdaSelection {
        candidates: candidates.to_vec(),
        delta_sq,
        sigma_sq,
        epsilon,
        chosen: chosen.unwrap_or(candidates[0]),
        fallback,
    })
}

/// Confidence set for the argmin location of the mean vector: index `r`
/// is kept iff the max-mean test on the per-r difference data
/// `X_{i,r} - X_{i,s}` does not reject at level `beta`. Each difference
/// panel selects its own temperature.
pub fn argmin_set(
    x: &MeansMatrix,
    beta: f64,
    candidates: &[f64],
    epsilon: f64,
    b: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if x.m() < 2 {
        return Err(Error::invalid("argmin set requires m >= 2"));
    }
    let mut kept = Vec::new();
    for r in 0..x.m() {
        let panel = x.difference_matrix(r)?;
        let selection = select_lambda(
            &panel,
            candidates,
            epsilon,
            b,
            rng::derive_seed(seed, &[r as u64]),
        )?;
        let state = loo_statistic(&panel, selection.chosen)?;
        let test = test_max_mean(&state, panel.n(), beta)?;
        if !test.reject {
            kept.push(r);
        }
    }
    Ok(kept)
}
