//! Monte Carlo quantiles of max and max-absolute-value of correlated
//! Gaussian vectors, plus PSD repair of estimated correlation matrices.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::rng;

/// Which max functional the quantile refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    /// Upper quantile of `max |N(0, Gamma)|` (two-sided bands).
    Abs,
    /// Upper quantile of `max N(0, Gamma)` (one-sided bounds).
    OneSided,
}

#[derive(Clone, Debug)]
pub struct QuantileRequest {
    pub gamma: SquareMatrix,
    pub beta: f64,
    pub sided: Sided,
    pub draws: usize,
}

/// Clip negative eigenvalues at zero and renormalize the diagonal to 1.
///
/// Rows/columns whose (clipped) diagonal is zero are left untouched, so a
/// degenerate all-zero correlation passes through unchanged. Asymmetric
/// input is symmetrized first.
pub fn psd_repair(gamma: &SquareMatrix) -> Result<SquareMatrix> {
    if !gamma.is_finite() {
        return Err(Error::numeric("correlation matrix has non-finite entries"));
    }
    let sym = gamma.symmetrized();
    let (values, vectors) = linalg::jacobi_eigen(&sym);
    let dim = sym.dim;
    if values.iter().all(|&l| l >= -1e-12) {
        // Already PSD: keep the input (idempotence up to symmetrization).
        return Ok(sym);
    }
    let mut repaired = SquareMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += vectors[(i, k)] * values[k].max(0.0) * vectors[(j, k)];
            }
            repaired[(i, j)] = acc;
        }
    }
    // Renormalize to unit diagonal where the diagonal survived.
    let scale: Vec<f64> = (0..dim)
        .map(|i| {
            let d = repaired[(i, i)];
            if d > 1e-12 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = SquareMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] = if i == j && scale[i] > 0.0 {
                1.0
            } else {
                repaired[(i, j)] * scale[i] * scale[j]
            };
        }
    }
    Ok(out)
}

const BATCH: usize = 4096;

/// Empirical upper-beta quantile of the requested max statistic over
/// `draws` samples of `N(0, Gamma)`.
///
/// Draws are generated through a symmetric eigen square root (repaired
/// matrices may be singular) in fixed-size batches with per-batch RNG
/// streams, so the merged sample is identical at any worker count. The
/// quantile is the order statistic at index `ceil((1-beta) * draws)`
/// of the ascending sample (upper-quantile convention), located by
/// selection rather than a full sort.
pub fn quantile(req: &QuantileRequest, seed: u64) -> Result<f64> {
    if !(req.beta > 0.0 && req.beta < 1.0) {
        return Err(Error::invalid("quantile level beta must lie in (0,1)"));
    }
    if req.draws < 10_000 {
        return Err(Error::invalid("quantile requires at least 10^4 draws"));
    }
    if !req.gamma.is_finite() {
        return Err(Error::numeric("correlation matrix has non-finite entries"));
    }
    let m = req.gamma.dim;
    let root = linalg::symmetric_sqrt(&req.gamma);
    if !root.is_finite() {
        return Err(Error::numeric(
            "square-root factor of the correlation matrix is non-finite",
        ));
    }
    let sided = req.sided;
    // Flat row-major square-root factor for the hot loop.
    let factor: Vec<f64> = (0..m * m).map(|idx| root[(idx / m, idx % m)]).collect();
    let n_batches = req.draws.div_ceil(BATCH);
    let mut stats: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut r = rng::stream(seed, &[0x6d63_7131, b as u64]);
            let count = if b + 1 == n_batches {
                req.draws - b * BATCH
            } else {
                BATCH
            };
            let mut g = vec![0.0f64; m];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                for gj in g.iter_mut() {
                    *gj = r.sample(StandardNormal);
                }
                let mut best = f64::NEG_INFINITY;
                for row in factor.chunks_exact(m) {
                    let mut x = 0.0;
                    for (a, b) in row.iter().zip(&g) {
                        x += a * b;
                    }
                    let v = match sided {
                        Sided::Abs => x.abs(),
                        Sided::OneSided => x,
                    };
                    if v > best {
                        best = v;
                    }
                }
                out.push(best);
            }
            out
        })
        .collect();
    let rank = ((1.0 - req.beta) * req.draws as f64).ceil() as usize;
    let idx = rank.clamp(1, req.draws) - 1;
    let (_, value, _) = stats.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    Ok(*value)
}

/// Quantile engine bundling the Monte Carlo budget; inference paths
/// default to 2e5 draws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuantileEngine {
    pub draws: usize,
}

impl Default for QuantileEngine {
    fn default() -> Self {
        QuantileEngine { draws: 200_000 }
    }
}

impl QuantileEngine {
    pub fn new(draws: usize) -> Self {
        QuantileEngine { draws }
    }

    /// Repair the matrix, then compute the requested quantile.
    pub fn quantile(
        &self,
        gamma: &SquareMatrix,
        beta: f64,
        sided: Sided,
        seed: u64,
    ) -> Result<f64> {
        let repaired = psd_repair(gamma)?;
        quantile(
            &QuantileRequest {
                gamma: repaired,
                beta,
                sided,
                draws: self.draws,
            },
            seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> SquareMatrix {
        SquareMatrix::from_rows(rows)
    }

    #[test]
    fn repair_identity_is_identity() {
        let id = SquareMatrix::identity(3);
        let r = psd_repair(&id).unwrap();
        assert_eq!(r, id);
    }

    #[test]
    fn repair_clips_indefinite_matrix() {
        let g = mat(&[vec![1.0, 1.2], vec![1.2, 1.0]]);
        let r = psd_repair(&g).unwrap();
        // Eigen oracle: clip -0.2 at 0, renormalize -> all-ones matrix.
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - 1.0).abs() < 1e-10, "({i},{j}) = {}", r[(i, j)]);
            }
        }
        let (values, _) = linalg::jacobi_eigen(&r);
        assert!(values[0] >= -1e-10);
    }

    #[test]
    fn repair_keeps_psd_matrix() {
        let g = mat(&[vec![1.0, 0.4], vec![0.4, 1.0]]);
        let r = psd_repair(&g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - g[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repair_passes_zero_matrix_through() {
        let g = SquareMatrix::zeros(2);
        let r = psd_repair(&g).unwrap();
        assert_eq!(r, g);
    }

    #[test]
    fn scalar_quantiles_match_normal_inverse() {
        let req = QuantileRequest {
            gamma: SquareMatrix::identity(1),
            beta: 0.05,
            sided: Sided::Abs,
            draws: 1_000_000,
        };
        let q = quantile(&req, 11).unwrap();
        assert!((q - 1.959_963_985).abs() < 0.01, "abs: {q}");
        let req = QuantileRequest {
            sided: Sided::OneSided,
            ..req
        };
        let q = quantile(&req, 11).unwrap();
        assert!((q - 1.644_853_627).abs() < 0.01, "one-sided: {q}");
    }

    #[test]
    fn independent_pair_abs_quantile() {
        // (2 Phi(t) - 1)^2 = 0.95 => t = Phi^{-1}((1 + sqrt(0.95)) / 2).
        let expected = crate::stats::normal_quantile((1.0 + 0.95f64.sqrt()) / 2.0);
        let req = QuantileRequest {
            gamma: SquareMatrix::identity(2),
            beta: 0.05,
            sided: Sided::Abs,
            draws: 1_000_000,
        };
        let q = quantile(&req, 13).unwrap();
        assert!((q - expected).abs() < 0.01, "{q} vs {expected}");
    }

    #[test]
    fn degenerate_zero_matrix_gives_zero() {
        for sided in [Sided::Abs, Sided::OneSided] {
            let req = QuantileRequest {
                gamma: SquareMatrix::zeros(3),
                beta: 0.05,
                sided,
                draws: 10_000,
            };
            assert_eq!(quantile(&req, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn quantile_decreasing_in_beta_on_shared_draws() {
        let gamma = mat(&[vec![1.0, 0.3], vec![0.3, 1.0]]);
        let mut last = f64::INFINITY;
        for beta in [0.01, 0.05, 0.1, 0.25, 0.5] {
            let req = QuantileRequest {
                gamma: gamma.clone(),
                beta,
                sided: Sided::Abs,
                draws: 50_000,
            };
            let q = quantile(&req, 17).unwrap();
            assert!(q <= last, "beta {beta}: {q} > {last}");
            last = q;
        }
    }

    #[test]
    fn abs_dominates_one_sided() {
        let gamma = mat(&[vec![1.0, -0.5], vec![-0.5, 1.0]]);
        let abs = quantile(
            &QuantileRequest {
                gamma: gamma.clone(),
                beta: 0.1,
                sided: Sided::Abs,
                draws: 50_000,
            },
            19,
        )
        .unwrap();
        let one = quantile(
            &QuantileRequest {
                gamma,
                beta: 0.1,
                sided: Sided::OneSided,
                draws: 50_000,
            },
            19,
        )
        .unwrap();
        assert!(abs >= one);
    }

    #[test]
    fn perfect_correlation_collapses_to_scalar() {
        let all_ones = mat(&[
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ]);
        let q3 = quantile(
            &QuantileRequest {
                gamma: all_ones,
                beta: 0.05,
                sided: Sided::Abs,
                draws: 400_000,
            },
            23,
        )
        .unwrap();
        assert!((q3 - 1.96).abs() < 0.02, "{q3}");
    }

    #[test]
    fn deterministic_given_seed() {
        let gamma = mat(&[vec![1.0, 0.2], vec![0.2, 1.0]]);
        let req = QuantileRequest {
            gamma,
            beta: 0.05,
            sided: Sided::Abs,
            draws: 20_000,
        };
        let a = quantile(&req, 5).unwrap();
        let b = quantile(&req, 5).unwrap();
        assert_eq!(a, b);
    }
}
