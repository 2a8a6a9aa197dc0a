//! Named, seeded desk-scale experiments; the acceptance-test driver.
//!
//! Every experiment resolves its configuration (user-supplied fields
//! override the preset), runs a seeded Monte Carlo, and emits a [`Report`]
//! with machine-readable pass/fail checks, summary scalars, and raw
//! per-replicate statistics. Reports are byte-identical across runs with
//! the same config and seed at any worker count: replicate streams derive
//! from `(seed, replicate)` and reductions happen in replicate order.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cv_engine::{
    self, GeneratorSpec, MarginalFamily, ResponseKind, RiskOracle,
};
use crate::data;
use crate::error::{Error, Result};
use crate::gauss::{self, QuantileEngine, QuantileRequest, Sided};
use crate::learners::{LearnerSpec, LossKind, SgdSpec, SieveSpec};
use crate::maxmean::{self, MeansMatrix};
use crate::mcs;
use crate::rng;
use crate::rollval;
use crate::stability::{self, EsStatistic};
use crate::stats;

/// Experiment configuration; unset fields fall back to the experiment's
/// preset so that the acceptance suite and the CLI share one schema.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_candidates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learners: Option<Vec<LearnerSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_aux: Option<usize>,
}

impl ExperimentConfig {
    pub fn named(name: &str) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One machine-readable pass/fail line: `lo <= observed <= hi` with open
/// ends when a bound is absent.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn le(name: &str, observed: f64, hi: f64) -> Self {
        Check {
            name: name.to_string(),
            observed,
            lo: None,
            hi: Some(hi),
            pass: observed <= hi,
        }
    }

    pub fn ge(name: &str, observed: f64, lo: f64) -> Self {
        Check {
            name: name.to_string(),
            observed,
            lo: Some(lo),
            hi: None,
            pass: observed >= lo,
        }
    }

    pub fn within(name: &str, observed: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.to_string(),
            observed,
            lo: Some(lo),
            hi: Some(hi),
            pass: observed >= lo && observed <= hi,
        }
    }
}

/// Deterministic experiment output.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub raw: BTreeMap<String, Vec<f64>>,
    pub pass: bool,
}

impl Report {
    fn new(name: &str, seed: u64, config: serde_json::Value) -> Self {
        Report {
            name: name.to_string(),
            seed,
            config,
            summary: BTreeMap::new(),
            checks: Vec::new(),
            raw: BTreeMap::new(),
            pass: true,
        }
    }

    fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

pub const REGISTRY: [&str; 16] = [
    "example31_identity",
    "cv_oracle_equivalence",
    "clt_random_centering",
    "variance_estimator",
    "gaussian_quantiles",
    "mcs_coverage",
    "cvc_vs_cv",
    "fig53_histograms",
    "argmin_coverage",
    "cross_conformal",
    "sgd_stability",
    "sgd_second_order",
    "sieve_stability",
    "rolling_validation",
    "efron_stein",
    "pairwise_split",
];

/// Run a registered experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.name.as_str() {
        "example31_identity" => example31_identity(cfg),
        "cv_oracle_equivalence" => cv_oracle_equivalence(cfg),
        "clt_random_centering" => clt_random_centering(cfg),
        "variance_estimator" => variance_estimator(cfg),
        "gaussian_quantiles" => gaussian_quantiles(cfg),
        "mcs_coverage" => mcs_coverage(cfg),
        "cvc_vs_cv" => cvc_vs_cv(cfg),
        "fig53_histograms" => fig53_histograms(cfg),
        "argmin_coverage" => argmin_coverage(cfg),
        "cross_conformal" => cross_conformal(cfg),
        "sgd_stability" => sgd_stability(cfg),
        "sgd_second_order" => sgd_second_order(cfg),
        "sieve_stability" => sieve_stability(cfg),
        "rolling_validation" => rolling_validation(cfg),
        "efron_stein" => efron_stein(cfg),
        "pairwise_split" => pairwise_split_experiment(cfg),
        other => Err(Error::invalid(format!(
            "unknown experiment '{}'; registered: {}",
            other,
            REGISTRY.join(", ")
        ))),
    }
}

/// Run on a dedicated pool with the given worker count (None = rayon
/// default). Reports are identical at any worker count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Report> {
    match threads {
        None => run_experiment(cfg),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment(cfg))
        }
    }
}

fn standard_mean_generator() -> GeneratorSpec {
    GeneratorSpec {
        oracle: RiskOracle {
            f_star: vec![0.0],
            sigma_eps2: 1.0,
            sigma_z_diag: vec![1.0],
        },
        z_family: MarginalFamily::Gaussian,
        noise_family: MarginalFamily::Gaussian,
        intercept: true,
        response: ResponseKind::Linear,
    }
}

// --- criterion 1 -----------------------------------------------------

/// The single-split identity of the zero-vs-mean comparison:
/// `R_ss,2 - R_ss,1 = -2 Ybar_te Ybar_tr + Ybar_tr^2` exactly.
fn example31_identity(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(200);
    let reps = cfg.replicates.unwrap_or(100);
    let gen = cfg.generator.clone().unwrap_or_else(standard_mean_generator);
    let splits: Vec<usize> = vec![n / 10, n / 4, n / 2, 3 * n / 4, 9 * n / 10];
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({"n": n, "replicates": reps, "n_tr_grid": splits, "generator": gen}),
    );
    let deviations: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut r = rng::stream(cfg.seed, &[1, rep as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let ys: Vec<f64> = d.iter().map(|s| s.y.unwrap()).collect();
            let mut worst = 0.0_f64;
            for &n_tr in &splits {
                let (tr, te) = ys.split_at(n_tr);
                let ybar_tr = stats::mean(tr);
                let ybar_te = stats::mean(te);
                let r1 = te.iter().map(|y| y * y).sum::<f64>() / te.len() as f64;
                let r2 = te.iter().map(|y| (y - ybar_tr) * (y - ybar_tr)).sum::<f64>()
                    / te.len() as f64;
                let identity = -2.0 * ybar_te * ybar_tr + ybar_tr * ybar_tr;
                worst = worst.max(((r2 - r1) - identity).abs());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let max_dev = deviations.iter().cloned().fold(0.0, f64::max);
    report.push(Check::le("identity_max_abs_deviation", max_dev, 1e-12));
    report.summary.insert("max_abs_deviation".into(), max_dev);
    report.raw.insert("deviations".into(), deviations);
    Ok(report)
}

// --- criterion 2 -----------------------------------------------------

/// `cv_losses` against a brute-force loop that refits per (fold, learner)
/// from scratch with the same fit seeds.
fn cv_oracle_equivalence(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(24);
    let ks = cfg.n_grid.clone().unwrap_or_else(|| vec![2, 3, 4, 6, 24]);
    let specs = cfg.learners.clone().unwrap_or_else(|| {
        vec![
            LearnerSpec::ConstantZero,
            LearnerSpec::EmpiricalMean,
            LearnerSpec::RidgeClosedForm { lambda: 1.0 },
        ]
    });
    let gen = cfg.generator.clone().unwrap_or_else(|| GeneratorSpec {
        oracle: RiskOracle {
            f_star: vec![0.0, 0.7],
            sigma_eps2: 1.0,
            sigma_z_diag: vec![1.0, 1.0],
        },
        z_family: MarginalFamily::Gaussian,
        noise_family: MarginalFamily::Gaussian,
        intercept: true,
        response: ResponseKind::Linear,
    });
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({"n": n, "k_grid": ks, "learners": specs, "generator": gen}),
    );
    let mut r = rng::stream(cfg.seed, &[2]);
    let d = gen.draw_dataset(n, &mut r)?;
    let mut worst = 0.0_f64;
    for &k in &ks {
        let plan = data::make_fold_plan(n, k, None)?;
        let l = cv_engine::cv_losses(&specs, &d, &plan, LossKind::Squared, cfg.seed)?;
        // Brute force: independent refit per (fold, learner), no caching.
        for fold in 0..k {
            let train = data::leave_out(&d, fold, &plan)?;
            for (ridx, spec) in specs.iter().enumerate() {
                let model =
                    crate::learners::fit(spec, &train, cv_engine::fit_seed(cfg.seed, fold, ridx))?;
                for &i in plan.fold_indices(fold) {
                    let oracle =
                        crate::learners::loss(&model, d.sample(i), LossKind::Squared)?;
                    worst = worst.max((l.entry(i, ridx) - oracle).abs());
                }
            }
        }
    }
    report.push(Check::le("max_abs_deviation_from_bruteforce", worst, 0.0));
    report.summary.insert("max_abs_deviation".into(), worst);
    Ok(report)
}

// --- criterion 3 -----------------------------------------------------

/// Standardized CV residual `sqrt(n) (R_hat - R_bar) / sigma_hat` against
/// the standard normal.
fn clt_random_centering(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(500);
    let k = cfg.k.unwrap_or(5);
    let reps = cfg.replicates.unwrap_or(2000);
    let gen = cfg.generator.clone().unwrap_or_else(standard_mean_generator);
    let specs = vec![LearnerSpec::EmpiricalMean];
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({"n": n, "k": k, "replicates": reps, "generator": gen, "learner": specs[0]}),
    );
    let plan = data::make_fold_plan(n, k, None)?;
    let stats_vec: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut r = rng::stream(cfg.seed, &[3, rep as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let fit_seed = rng::derive_seed(cfg.seed, &[3, rep as u64, 1]);
            let l = cv_engine::cv_losses(&specs, &d, &plan, LossKind::Squared, fit_seed)?;
            let r_hat = cv_engine::cv_risk(&l)[0];
            let sigma = cv_engine::sigma_hat(&l)?[0];
            let r_bar = cv_engine::bar_target(&specs, &d, &plan, &gen.oracle, fit_seed)?[0];
            Ok((n as f64).sqrt() * (r_hat - r_bar) / sigma)
        })
        .collect::<Result<_>>()?;
    let ks = stats::ks_normal(&stats_vec);
    report.push(Check::le("ks_vs_standard_normal", ks, 0.05));
    report.summary.insert("ks".into(), ks);
    report.raw.insert("standardized_residuals".into(), stats_vec);
    Ok(report)
}

// --- criterion 4 -----------------------------------------------------

/// Variance estimator consistency for a generator with a known asymptotic
/// variance: for `y ~ N(0,1)` and the mean learner,
/// `sigma^2 -> Var(y^2) = 2`.
fn variance_estimator(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(5000);
    let k = cfg.k.unwrap_or(5);
    let seeds = cfg.replicates.unwrap_or(10);
    let gen = cfg.generator.clone().unwrap_or_else(standard_mean_generator);
    let known_sigma2 = 2.0 * gen.oracle.sigma_eps2 * gen.oracle.sigma_eps2;
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({"n": n, "k": k, "seeds": seeds, "generator": gen, "known_sigma2": known_sigma2}),
    );
    let plan = data::make_fold_plan(n, k, None)?;
    let specs = vec![LearnerSpec::EmpiricalMean];
    let ratios: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let mut r = rng::stream(cfg.seed, &[4, s as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let l = cv_engine::cv_losses(&specs, &d, &plan, LossKind::Squared, cfg.seed)?;
            let sigma2 = cv_engine::sigma_hat(&l)?[0].powi(2);
            Ok(sigma2 / known_sigma2)
        })
        .collect::<Result<_>>()?;
    let worst_low = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst_high = ratios.iter().cloned().fold(0.0, f64::max);
    report.push(Check::ge("min_sigma2_ratio", worst_low, 0.9));
    report.push(Check::le("max_sigma2_ratio", worst_high, 1.1));
    report.raw.insert("ratios".into(), ratios);
    Ok(report)
}

// --- criterion 5 -----------------------------------------------------

fn gaussian_quantiles(cfg: &ExperimentConfig) -> Result<Report> {
    let draws = cfg.draws.unwrap_or(1_000_000);
    let mut report =
        Report::new(&cfg.name, cfg.seed, json!({"draws": draws, "beta": 0.05}));
    let q_abs1 = gauss::quantile(
        &QuantileRequest {
            gamma: crate::linalg::SquareMatrix::identity(1),
            beta: 0.05,
            sided: Sided::Abs,
            draws,
        },
        rng::derive_seed(cfg.seed, &[5, 1]),
    )?;
    let q_one1 = gauss::quantile(
        &QuantileRequest {
            gamma: crate::linalg::SquareMatrix::identity(1),
            beta: 0.05,
            sided: Sided::OneSided,
            draws,
        },
        rng::derive_seed(cfg.seed, &[5, 2]),
    )?;
    let q_abs2 = gauss::quantile(
        &QuantileRequest {
            gamma: crate::linalg::SquareMatrix::identity(2),
            beta: 0.05,
            sided: Sided::Abs,
            draws,
        },
        rng::derive_seed(cfg.seed, &[5, 3]),
    )?;
    let target2 = stats::normal_quantile((1.0 + 0.95f64.sqrt()) / 2.0);
    report.push(Check::within("abs_m1", q_abs1, 1.96 - 0.01, 1.96 + 0.01));
    report.push(Check::within("one_sided_m1", q_one1, 1.645 - 0.01, 1.645 + 0.01));
    report.push(Check::within("abs_m2_identity", q_abs2, target2 - 0.01, target2 + 0.01));
    report.summary.insert("abs_m1".into(), q_abs1);
    report.summary.insert("one_sided_m1".into(), q_one1);
    report.summary.insert("abs_m2".into(), q_abs2);
    Ok(report)
}

// --- criteria 6 and 7: nested truncated-series model selection --------

fn nested_generator(p: usize, signal: &[f64], sigma_eps2: f64) -> GeneratorSpec {
    let mut f_star = vec![0.0; p];
    for (j, &v) in signal.iter().enumerate() {
        f_star[j] = v;
    }
    GeneratorSpec {
        oracle: RiskOracle {
            f_star,
            sigma_eps2,
            sigma_z_diag: vec![1.0; p],
        },
        z_family: MarginalFamily::Gaussian,
        noise_family: MarginalFamily::Gaussian,
        intercept: false,
        response: ResponseKind::Linear,
    }
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

/// Coverage of the oracle target `r* = argmin R_bar` by both confidence
/// sets, plus the exact argmin-membership invariant.
fn mcs_coverage(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(400);
    let k = cfg.k.unwrap_or(5);
    let m = cfg.m.unwrap_or(5);
    let beta = cfg.beta.unwrap_or(0.1);
    let reps = cfg.replicates.unwrap_or(500);
    let draws = cfg.draws.unwrap_or(200_000);
    let gen = cfg
        .generator
        .clone()
        .unwrap_or_else(|| nested_generator(m - 1, &[1.0, 0.5], 1.0));
    let specs: Vec<LearnerSpec> = (0..m).map(|j| LearnerSpec::TruncatedSeries { j }).collect();
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "k": k, "m": m, "beta": beta, "replicates": reps,
            "draws": draws, "generator": gen, "learners": specs
        }),
    );
    let plan = data::make_fold_plan(n, k, None)?;
    let engine = QuantileEngine::new(draws);
    // Per replicate: (naive covers, diff covers, argmin invariant holds).
    let rows: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64, f64)> {
            let mut r = rng::stream(cfg.seed, &[6, rep as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let fit_seed = rng::derive_seed(cfg.seed, &[6, rep as u64, 1]);
            let l = cv_engine::cv_losses(&specs, &d, &plan, LossKind::Squared, fit_seed)?;
            let summary = cv_engine::summarize(&l)?;
            let naive = mcs::mcs_naive(
                &summary,
                n,
                beta,
                &engine,
                rng::derive_seed(cfg.seed, &[6, rep as u64, 2]),
            )?;
            let diff = mcs::mcs_diff(
                &l,
                n,
                beta,
                &engine,
                rng::derive_seed(cfg.seed, &[6, rep as u64, 3]),
            )?;
            let r_bar = cv_engine::bar_target(&specs, &d, &plan, &gen.oracle, fit_seed)?;
            let r_star = argmin_first(&r_bar);
            let cv_argmin = argmin_first(&summary.r_hat);
            let invariant = naive.contains(cv_argmin) && diff.contains(cv_argmin);
            Ok((
                f64::from(naive.contains(r_star)),
                f64::from(diff.contains(r_star)),
                f64::from(invariant),
            ))
        })
        .collect::<Result<_>>()?;
    let cov_naive = stats::mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let cov_diff = stats::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let invariant = stats::mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    report.push(Check::ge("coverage_naive", cov_naive, 0.88));
    report.push(Check::ge("coverage_difference", cov_diff, 0.88));
    report.push(Check::ge("argmin_membership_invariant", invariant, 1.0));
    report.summary.insert("coverage_naive".into(), cov_naive);
    report.summary.insert("coverage_difference".into(), cov_diff);
    Ok(report)
}

/// Most-parsimonious selection against raw CV argmin in a best-subset
/// problem with nested (prefix) candidates.
fn cvc_vs_cv(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(1000);
    let k = cfg.k.unwrap_or(5);
    let p = cfg.m.unwrap_or(5);
    let beta = cfg.beta.unwrap_or(0.1);
    let reps = cfg.replicates.unwrap_or(200);
    let draws = cfg.draws.unwrap_or(200_000);
    let gen = cfg
        .generator
        .clone()
        .unwrap_or_else(|| nested_generator(p, &[0.8, 0.5], 1.0));
    let true_size = gen.oracle.f_star.iter().filter(|&&v| v != 0.0).count();
    let specs: Vec<LearnerSpec> = (0..=p).map(|j| LearnerSpec::TruncatedSeries { j }).collect();
    let complexity: Vec<usize> = (0..=p).collect();
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "k": k, "p": p, "beta": beta, "replicates": reps,
            "draws": draws, "generator": gen, "true_support_size": true_size
        }),
    );
    let plan = data::make_fold_plan(n, k, None)?;
    let engine = QuantileEngine::new(draws);
    let rows: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64, f64)> {
            let mut r = rng::stream(cfg.seed, &[7, rep as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let fit_seed = rng::derive_seed(cfg.seed, &[7, rep as u64, 1]);
            let l = cv_engine::cv_losses(&specs, &d, &plan, LossKind::Squared, fit_seed)?;
            let summary = cv_engine::summarize(&l)?;
            let j_cv = argmin_first(&summary.r_hat);
            let set = mcs::mcs_naive(
                &summary,
                n,
                beta,
                &engine,
                rng::derive_seed(cfg.seed, &[7, rep as u64, 2]),
            )?;
            let j_cvc = mcs::cvc_select(&set, &complexity)?;
            Ok((
                f64::from(j_cvc == true_size),
                f64::from(j_cv == true_size),
                f64::from(complexity[j_cvc] <= complexity[j_cv]),
            ))
        })
        .collect::<Result<_>>()?;
    let freq_cvc = stats::mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let freq_cv = stats::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let parsimony = stats::mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    report.push(Check::ge("freq_cvc_selects_true_support", freq_cvc, 0.9));
    report.push(Check::ge(
        "cvc_beats_cv",
        freq_cvc - freq_cv,
        f64::MIN_POSITIVE,
    ));
    report.push(Check::ge("parsimony_invariant", parsimony, 1.0));
    report.summary.insert("freq_cvc".into(), freq_cvc);
    report.summary.insert("freq_cv".into(), freq_cv);
    Ok(report)
}

// --- criteria 8 and 9: softmax histograms, size, and lower bound -------

fn fig53_histograms(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(500);
    let m = cfg.m.unwrap_or(10);
    let reps = cfg.replicates.unwrap_or(2000);
    let beta = cfg.beta.unwrap_or(0.05);
    let epsilon = cfg.epsilon.unwrap_or(0.05);
    let boot = cfg.boot.unwrap_or(200);
    let candidates = cfg
        .lambda_candidates
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "m": m, "replicates": reps, "beta": beta,
            "epsilon": epsilon, "boot": boot, "lambda_candidates": candidates,
            "theta": "zero vector, X ~ N(0, I)"
        }),
    );
    // Per replicate: standardized cv-softmax, lambda=inf LOOCV, and
    // non-CV softmax statistics (all have oracle centering 0 under
    // theta = 0), plus the test decision and lower bound.
    let rows: Vec<(f64, f64, f64, f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64, f64, f64, f64, f64)> {
            let mut r = rng::stream(cfg.seed, &[8, rep as u64]);
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                rows.push(
                    (0..m)
                        .map(|_| r.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<f64>>(),
                );
            }
            let x = MeansMatrix::from_rows(&rows)?;
            let sel = maxmean::select_lambda(
                &x,
                &candidates,
                epsilon,
                boot,
                rng::derive_seed(cfg.seed, &[8, rep as u64, 1]),
            )?;
            let state = maxmean::loo_statistic(&x, sel.chosen)?;
            let cv_stat = (n as f64).sqrt() * state.t_stat / state.sigma_hat;
            let test = maxmean::test_max_mean(&state, n, beta)?;
            // lambda = infinity: evaluate each row at the leave-one-out
            // argmax (the unstable LOOCV statistic).
            let totals: Vec<f64> = x.col_means().iter().map(|v| v * n as f64).collect();
            let mut q_loocv = Vec::with_capacity(n);
            for i in 0..n {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for s in 0..m {
                    let v = (totals[s] - x.entry(i, s)) / (n - 1) as f64;
                    if v > best_val {
                        best_val = v;
                        best = s;
                    }
                }
                q_loocv.push(x.entry(i, best));
            }
            let loocv_mean = stats::mean(&q_loocv);
            let loocv_sd = stats::population_variance(&q_loocv).sqrt();
            let loocv_stat = (n as f64).sqrt() * loocv_mean / loocv_sd;
            // Non-CV softmax: weights from the full-sample means.
            let w = maxmean::softmax_weights(&x.col_means(), sel.chosen);
            let q_plain: Vec<f64> = (0..n)
                .map(|i| (0..m).map(|s| w[s] * x.entry(i, s)).sum())
                .collect();
            let plain_mean = stats::mean(&q_plain);
            let plain_sd = stats::population_variance(&q_plain).sqrt();
            let plain_stat = (n as f64).sqrt() * plain_mean / plain_sd;
            Ok((
                cv_stat,
                loocv_stat,
                plain_stat,
                f64::from(test.reject),
                // max theta = 0 is covered iff the lower bound is <= 0.
                f64::from(test.lower_bound <= 0.0),
                sel.chosen,
            ))
        })
        .collect::<Result<_>>()?;
    let cv: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let loocv: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let plain: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let ks_cv = stats::ks_normal(&cv);
    let ks_loocv = stats::ks_normal(&loocv);
    let ks_plain = stats::ks_normal(&plain);
    let reject_rate = stats::mean(&rows.iter().map(|r| r.3).collect::<Vec<_>>());
    let bound_coverage = stats::mean(&rows.iter().map(|r| r.4).collect::<Vec<_>>());
    report.push(Check::le("ks_cv_softmax", ks_cv, 0.05));
    report.push(Check::ge("ks_loocv_vs_2x", ks_loocv, 2.0 * ks_cv));
    report.push(Check::ge("ks_plain_vs_2x", ks_plain, 2.0 * ks_cv));
    report.push(Check::le("null_rejection_rate", reject_rate, 0.07));
    report.push(Check::ge("lower_bound_coverage", bound_coverage, 0.93));
    report.summary.insert("ks_cv".into(), ks_cv);
    report.summary.insert("ks_loocv".into(), ks_loocv);
    report.summary.insert("ks_plain".into(), ks_plain);
    report.summary.insert("reject_rate".into(), reject_rate);
    report
        .summary
        .insert("lower_bound_coverage".into(), bound_coverage);
    report.raw.insert("cv_softmax".into(), cv);
    report.raw.insert("loocv".into(), loocv);
    report.raw.insert("plain_softmax".into(), plain);
    report.raw.insert(
        "chosen_lambda".into(),
        rows.iter().map(|r| r.5).collect(),
    );
    Ok(report)
}

// --- criterion 10 -----------------------------------------------------

fn argmin_coverage(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(500);
    let beta = cfg.beta.unwrap_or(0.1);
    let reps = cfg.replicates.unwrap_or(500);
    let epsilon = cfg.epsilon.unwrap_or(0.05);
    let boot = cfg.boot.unwrap_or(200);
    let candidates = cfg
        .lambda_candidates
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0]);
    // Unique argmin at index 0; index 3 dominated by +10.
    let theta = [0.0, 0.3, 0.3, 10.0];
    let m = theta.len();
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "beta": beta, "replicates": reps, "epsilon": epsilon,
            "boot": boot, "lambda_candidates": candidates, "theta": theta
        }),
    );
    let rows: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64)> {
            let mut r = rng::stream(cfg.seed, &[10, rep as u64]);
            let mut data_rows = Vec::with_capacity(n);
            for _ in 0..n {
                data_rows.push(
                    theta
                        .iter()
                        .map(|&t| t + r.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<f64>>(),
                );
            }
            let x = MeansMatrix::from_rows(&data_rows)?;
            let set = maxmean::argmin_set(
                &x,
                beta,
                &candidates,
                epsilon,
                boot,
                rng::derive_seed(cfg.seed, &[10, rep as u64, 1]),
            )?;
            let covers = set.contains(&0);
            let excludes_dominated = !set.contains(&(m - 1));
            Ok((f64::from(covers), f64::from(excludes_dominated)))
        })
        .collect::<Result<_>>()?;
    let coverage = stats::mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let exclusion = stats::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    report.push(Check::ge("argmin_coverage", coverage, 0.88));
    report.push(Check::ge("dominated_exclusion", exclusion, 0.95));
    report.summary.insert("coverage".into(), coverage);
    report.summary.insert("exclusion".into(), exclusion);
    Ok(report)
}

// --- criterion 11 -----------------------------------------------------

fn cross_conformal(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(500);
    let k = cfg.k.unwrap_or(5);
    let reps = cfg.replicates.unwrap_or(1000);
    let alpha = cfg.alpha.unwrap_or(0.1);
    let gen = cfg.generator.clone().unwrap_or_else(|| GeneratorSpec {
        oracle: RiskOracle {
            f_star: vec![0.5, 1.0, -0.7],
            sigma_eps2: 1.0,
            sigma_z_diag: vec![1.0, 1.0, 1.0],
        },
        z_family: MarginalFamily::Gaussian,
        noise_family: MarginalFamily::Gaussian,
        intercept: true,
        response: ResponseKind::Linear,
    });
    let score = cfg
        .learners
        .as_ref()
        .and_then(|l| l.first().copied())
        .unwrap_or(LearnerSpec::RidgeClosedForm { lambda: 0.1 });
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "k": k, "replicates": reps, "alpha": alpha,
            "generator": gen, "score": score
        }),
    );
    let p_values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut r = rng::stream(cfg.seed, &[11, rep as u64]);
            let d = gen.draw_dataset(n, &mut r)?;
            let fresh = gen.draw_sample(&mut r);
            crate::conformal::cross_conformal_p(
                &d,
                k,
                &score,
                fresh.y.unwrap(),
                &fresh.z,
                rng::derive_seed(cfg.seed, &[11, rep as u64, 1]),
            )
        })
        .collect::<Result<_>>()?;
    let ks = stats::ks_uniform(&p_values);
    // Fresh point is in the prediction set iff p_cc <= 1 - alpha.
    let coverage = p_values.iter().filter(|&&p| p <= 1.0 - alpha).count() as f64
        / p_values.len() as f64;
    report.push(Check::le("ks_p_values_vs_uniform", ks, 0.05));
    report.push(Check::within("prediction_set_coverage", coverage, 0.88, 0.93));
    report.summary.insert("ks".into(), ks);
    report.summary.insert("coverage".into(), coverage);
    report.raw.insert("p_values".into(), p_values);
    Ok(report)
}

// --- criteria 12 and 13: SGD stability --------------------------------

fn bounded_sgd_generator() -> GeneratorSpec {
    GeneratorSpec {
        oracle: RiskOracle {
            f_star: vec![0.3, -0.2],
            sigma_eps2: 0.05,
            sigma_z_diag: vec![0.25, 0.25],
        },
        z_family: MarginalFamily::BoundedUniform,
        noise_family: MarginalFamily::BoundedUniform,
        intercept: false,
        response: ResponseKind::Linear,
    }
}

fn default_sgd_spec() -> SgdSpec {
    SgdSpec::ridge(1.2, 1.0, 3.0, 0.5)
}

fn sgd_stability(cfg: &ExperimentConfig) -> Result<Report> {
    let n_grid = cfg
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![100, 200, 400, 800, 1600, 3200]);
    let b = cfg.replicates.unwrap_or(50);
    let gen = cfg.generator.clone().unwrap_or_else(bounded_sgd_generator);
    let spec = match cfg.learners.as_ref().and_then(|l| l.first().copied()) {
        Some(LearnerSpec::Sgd(s)) => s,
        _ => default_sgd_spec(),
    };
    let a = spec.a;
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n_grid": n_grid, "replicates": b, "generator": gen,
            "spec": LearnerSpec::Sgd(spec)
        }),
    );
    let bound_report = stability::sgd_bound_check(&spec, &gen, &n_grid, b, cfg.seed)?;
    let all_below = bound_report.rows.iter().all(|r| r.pass);
    let all_cond = bound_report.rows.iter().all(|r| r.condition_met);
    let all_last = bound_report.rows.iter().all(|r| r.last_pass);
    report.push(Check::ge(
        "all_measured_below_bound",
        f64::from(all_below),
        1.0,
    ));
    report.push(Check::ge("learning_rate_condition", f64::from(all_cond), 1.0));
    report.push(Check::ge(
        "last_index_exact_bound",
        f64::from(all_last),
        1.0,
    ));
    report.push(Check::within(
        "log_log_slope",
        bound_report.slope,
        -a - 0.15,
        -a + 0.15,
    ));
    report.summary.insert("slope".into(), bound_report.slope);
    for row in &bound_report.rows {
        report
            .summary
            .insert(format!("max_nabla_n{}", row.n), row.max_nabla);
        report
            .summary
            .insert(format!("bound_n{}", row.n), row.bound);
    }
    report.raw.insert(
        "l2_last".into(),
        bound_report.rows.iter().map(|r| r.l2_last).collect(),
    );
    Ok(report)
}

fn sgd_second_order(cfg: &ExperimentConfig) -> Result<Report> {
    let n_grid = cfg
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![100, 200, 400, 800, 1600, 3200]);
    let b = cfg.replicates.unwrap_or(50);
    let gen = cfg.generator.clone().unwrap_or_else(bounded_sgd_generator);
    let spec = match cfg.learners.as_ref().and_then(|l| l.first().copied()) {
        Some(LearnerSpec::Sgd(s)) => s,
        _ => default_sgd_spec(),
    };
    let a = spec.a;
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n_grid": n_grid, "replicates": b, "generator": gen,
            "spec": LearnerSpec::Sgd(spec), "positions": "last two (binding case)"
        }),
    );
    let learner = LearnerSpec::Sgd(spec);
    let mut l2 = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let est = stability::nabla2_samples(
            &learner,
            &gen,
            n,
            b,
            rng::derive_seed(cfg.seed, &[13, gi as u64]),
        )?;
        l2.push(stability::lq_norm(&est.samples, 2.0));
    }
    let log_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let log_l2: Vec<f64> = l2.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, _) = stats::linear_fit(&log_n, &log_l2);
    report.push(Check::le("log_log_slope", slope, -2.0 * a + 0.2));
    report.summary.insert("slope".into(), slope);
    report.raw.insert("l2_second_difference".into(), l2);
    Ok(report)
}

// --- criterion 14 -----------------------------------------------------

fn sieve_generator(dim: usize) -> GeneratorSpec {
    let mut f_star = vec![0.0; dim];
    for (j, v) in [0.8, 0.4, 0.2, 0.1, 0.05].iter().enumerate() {
        if j < dim {
            f_star[j] = *v;
        }
    }
    GeneratorSpec {
        oracle: RiskOracle {
            f_star,
            sigma_eps2: 0.25,
            sigma_z_diag: vec![1.0; dim],
        },
        z_family: MarginalFamily::BoundedUniform,
        noise_family: MarginalFamily::BoundedUniform,
        intercept: false,
        response: ResponseKind::Linear,
    }
}

fn sieve_stability(cfg: &ExperimentConfig) -> Result<Report> {
    let t_grid = cfg
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![250, 500, 1000, 2000]);
    // The squared prediction differences are heavy-tailed; the 4-point
    // slope needs a few hundred replicates to stabilize near -2a.
    let b = cfg.replicates.unwrap_or(400);
    let spec = match cfg.learners.as_ref().and_then(|l| l.first().copied()) {
        Some(LearnerSpec::SieveSgdOnline(s)) => s,
        _ => SieveSpec {
            tau: 0.2,
            a: 0.4,
            w: 0.6,
            c: 0.3,
        },
    };
    let gen = cfg.generator.clone().unwrap_or_else(|| sieve_generator(8));
    let a = spec.a;
    if spec.a + 2.0 * spec.w * spec.tau >= 1.0 {
        return Err(Error::invalid("sieve stability setup needs a + 2w tau < 1"));
    }
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "t_grid": t_grid, "replicates": b, "generator": gen,
            "spec": LearnerSpec::SieveSgdOnline(spec)
        }),
    );
    let learner = LearnerSpec::SieveSgdOnline(spec);
    // Mean squared prediction difference at a fresh covariate,
    // perturbing the last stream position (the binding case).
    let mut msq = Vec::with_capacity(t_grid.len());
    for (gi, &t) in t_grid.iter().enumerate() {
        let values: Vec<f64> = (0..b)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                let mut r = rng::stream(cfg.seed, &[14, gi as u64, rep as u64]);
                let d = gen.draw_dataset(t, &mut r)?;
                let replacement = gen.draw_sample(&mut r);
                let fresh = gen.draw_sample(&mut r);
                let d_pert = data::perturb_one(&d, t - 1, replacement)?;
                let base = crate::learners::fit_in_order(&learner, &d)?;
                let pert = crate::learners::fit_in_order(&learner, &d_pert)?;
                let diff = base.predict(&fresh.z) - pert.predict(&fresh.z);
                Ok(diff * diff)
            })
            .collect::<Result<_>>()?;
        msq.push(stats::mean(&values));
    }
    let log_t: Vec<f64> = t_grid.iter().map(|&t| (t as f64).ln()).collect();
    let log_m: Vec<f64> = msq.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, _) = stats::linear_fit(&log_t, &log_m);
    report.push(Check::within(
        "log_log_slope",
        slope,
        -2.0 * a - 0.3,
        -2.0 * a + 0.3,
    ));
    report.summary.insert("slope".into(), slope);
    report.raw.insert("mean_sq_prediction_diff".into(), msq);
    Ok(report)
}

// --- criterion 15 -----------------------------------------------------

fn rolling_validation(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(5000);
    let reps = cfg.replicates.unwrap_or(100);
    let xi_grid = cfg.xi_grid.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]);
    let dim = 16;
    let gen = cfg.generator.clone().unwrap_or_else(|| {
        let mut f_star = vec![0.0; dim];
        for (j, v) in [0.5, 0.4, 0.6, 0.3, 0.2].iter().enumerate() {
            f_star[j] = *v;
        }
        GeneratorSpec {
            oracle: RiskOracle {
                f_star,
                sigma_eps2: 0.25,
                sigma_z_diag: vec![1.0; dim],
            },
            z_family: MarginalFamily::Gaussian,
            noise_family: MarginalFamily::Gaussian,
            intercept: false,
            response: ResponseKind::Linear,
        }
    });
    let candidates = cfg.learners.clone().unwrap_or_else(|| {
        vec![
            // Well-specified basis growth vs badly truncated growth.
            LearnerSpec::SieveSgdOnline(SieveSpec {
                tau: 0.3,
                a: 0.4,
                w: 0.51,
                c: 0.5,
            }),
            LearnerSpec::SieveSgdOnline(SieveSpec {
                tau: 0.05,
                a: 0.4,
                w: 0.51,
                c: 0.5,
            }),
        ]
    });
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "replicates": reps, "xi_grid": xi_grid,
            "generator": gen, "candidates": candidates
        }),
    );
    let p = gen.dim();
    for (xi_idx, &xi) in xi_grid.iter().enumerate() {
        let hits: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                let mut r = rng::stream(cfg.seed, &[15, xi_idx as u64, rep as u64]);
                let mut state =
                    rollval::RollingState::new(&candidates, p, xi, LossKind::Squared)?;
                for _ in 0..n {
                    let x = gen.draw_sample(&mut r);
                    state = rollval::rolling_update(&state, &x)?;
                }
                Ok(f64::from(rollval::select(&state) == 0))
            })
            .collect::<Result<_>>()?;
        let accuracy = stats::mean(&hits);
        report
            .summary
            .insert(format!("accuracy_xi{}", xi), accuracy);
        if (xi - 1.0).abs() < 1e-12 {
            report.push(Check::ge("selection_accuracy_xi1", accuracy, 0.8));
        }
    }
    // Noiseless delay-ratio check at the rule-of-thumb xi = 1: the
    // accumulator crossing should land within 20% of the approximate
    // delay formula i* (1 + 1/(xi + 1 - a)).
    let (a1, e1, a2, e2): (f64, f64, f64, f64) = (4.0, 0.5, 1.0, 0.3);
    let i_star = (a1 / a2).powf(1.0 / (e1 - e2));
    let xi_rot = 1.0;
    let predicted = i_star * (1.0 + 1.0 / (xi_rot + 1.0 - e1));
    let crossing = rollval::noiseless_crossing(a1, e1, a2, e2, xi_rot, 1_000_000);
    let rel = (crossing as f64 - predicted).abs() / predicted;
    report.push(Check::le("delay_ratio_relative_error", rel, 0.2));
    report
        .summary
        .insert("delay_crossing".into(), crossing as f64);
    report.summary.insert("delay_predicted".into(), predicted);
    Ok(report)
}

// --- criterion 16 -----------------------------------------------------

fn efron_stein(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(100);
    let b = cfg.replicates.unwrap_or(10_000);
    let gen = cfg.generator.clone().unwrap_or_else(standard_mean_generator);
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({"n": n, "replicates": b, "generator": gen, "statistic": "mean_y"}),
    );
    let rep = stability::efron_stein_check(EsStatistic::MeanY, &gen, n, b, cfg.seed)?;
    report.push(Check::within("variance_over_bound", rep.ratio, 0.95, 1.05));
    report.summary.insert("mc_variance".into(), rep.mc_variance);
    report.summary.insert("bound".into(), rep.bound);
    report.summary.insert("ratio".into(), rep.ratio);
    Ok(report)
}

// --- pairwise selection-error experiment -------------------------------

/// Selection-error frequency of the zero-vs-mean pair over a split-ratio
/// grid, with paired seeds across configurations.
pub fn pairwise_split_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.n.unwrap_or(1000);
    let reps = cfg.replicates.unwrap_or(4000);
    let gen = cfg.generator.clone().unwrap_or_else(standard_mean_generator);
    // Standard 10-fold split, even split, reversed 10-fold split.
    let train_fracs = [0.9, 0.5, 0.1];
    let n_scale_grid = [n / 5, n, n * 5];
    let mut report = Report::new(
        &cfg.name,
        cfg.seed,
        json!({
            "n": n, "replicates": reps, "generator": gen,
            "train_fractions": train_fracs, "n_grid": n_scale_grid
        }),
    );
    let error_rate = |n_total: usize, frac: f64, tag: u64| -> Result<f64> {
        let n_tr = ((n_total as f64) * frac).round() as usize;
        let errs: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                // Paired seeds: the replicate stream depends on the
                // replicate id and the total size only, so every split
                // ratio sees the same datasets.
                let mut r = rng::stream(cfg.seed, &[16, tag, rep as u64]);
                let d = gen.draw_dataset(n_total, &mut r)?;
                let ys: Vec<f64> = d.iter().map(|s| s.y.unwrap()).collect();
                let (tr, te) = ys.split_at(n_tr);
                let ybar_tr = stats::mean(tr);
                let r1 = te.iter().map(|y| y * y).sum::<f64>() / te.len() as f64;
                let r2 = te.iter().map(|y| (y - ybar_tr) * (y - ybar_tr)).sum::<f64>()
                    / te.len() as f64;
                // Model 2 (the mean) is selected only on strict
                // improvement; ties go to the simpler model 1.
                Ok(f64::from(r2 < r1))
            })
            .collect::<Result<_>>()?;
        Ok(stats::mean(&errs))
    };
    let mut ratio_errors = Vec::new();
    for &frac in &train_fracs {
        ratio_errors.push(error_rate(n, frac, 0)?);
    }
    report.summary.insert("error_standard_10fold".into(), ratio_errors[0]);
    report.summary.insert("error_even_split".into(), ratio_errors[1]);
    report.summary.insert("error_reversed_10fold".into(), ratio_errors[2]);
    report.push(Check::le(
        "reversed_beats_standard",
        ratio_errors[2],
        ratio_errors[0] - 1e-9,
    ));
    let monotone = ratio_errors[0] > ratio_errors[1] && ratio_errors[1] > ratio_errors[2];
    report.push(Check::ge(
        "monotone_in_test_fraction",
        f64::from(monotone),
        1.0,
    ));
    // At a fixed split ratio the zero-vs-mean error is n-free:
    // exactly arctan(2 sqrt(n_tr/n_te)) / pi at every n for Gaussian
    // responses, so the n-grid errors must agree within Monte Carlo
    // error rather than decrease.
    let fixed_ratio: f64 = 0.5;
    let expected = (2.0 * (fixed_ratio / (1.0 - fixed_ratio)).sqrt()).atan()
        / std::f64::consts::PI;
    let mut n_errors = Vec::new();
    for (gi, &n_total) in n_scale_grid.iter().enumerate() {
        n_errors.push(error_rate(n_total, fixed_ratio, 1 + gi as u64)?);
    }
    let worst_gap = n_errors
        .iter()
        .map(|e| (e - expected).abs())
        .fold(0.0, f64::max);
    // Monte Carlo standard error of a frequency at `reps` replicates.
    let mc_tol = 4.0 * (expected * (1.0 - expected) / reps as f64).sqrt();
    report.push(Check::le("fixed_ratio_error_is_n_free", worst_gap, mc_tol));
    report.raw.insert("errors_by_ratio".into(), ratio_errors);
    report.raw.insert("errors_by_n".into(), n_errors.clone());
    report.summary.insert("fixed_ratio_expected".into(), expected);
    // Degenerate noiseless case: both models coincide with f* = 0 and the
    // tie-break picks model 1; reported, not an error.
    let mut degenerate_gen = gen.clone();
    degenerate_gen.oracle.sigma_eps2 = 0.0;
    let mut r = rng::stream(cfg.seed, &[16, 99]);
    let d = degenerate_gen.draw_dataset(n, &mut r)?;
    let ys: Vec<f64> = d.iter().map(|s| s.y.unwrap()).collect();
    let (tr, te) = ys.split_at(n / 2);
    let ybar_tr = stats::mean(tr);
    let r1 = te.iter().map(|y| y * y).sum::<f64>() / te.len() as f64;
    let r2 = te.iter().map(|y| (y - ybar_tr) * (y - ybar_tr)).sum::<f64>() / te.len() as f64;
    let tie_selects_model1 = !(r2 < r1);
    report.push(Check::ge(
        "degenerate_tie_selects_model1",
        f64::from(tie_selects_model1),
        1.0,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_lists_registry() {
        let err = run_experiment(&ExperimentConfig::named("nope")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown experiment"));
        assert!(msg.contains("example31_identity"));
    }

    #[test]
    fn example31_runs_and_passes_quickly() {
        let mut cfg = ExperimentConfig::named("example31_identity").with_seed(1);
        cfg.replicates = Some(10);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass, "{:?}", report.checks);
    }

    #[test]
    fn oracle_equivalence_small() {
        let cfg = ExperimentConfig::named("cv_oracle_equivalence").with_seed(2);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass);
        assert_eq!(report.summary["max_abs_deviation"], 0.0);
    }

    #[test]
    fn reports_are_worker_count_invariant() {
        let mut cfg = ExperimentConfig::named("example31_identity").with_seed(3);
        cfg.replicates = Some(25);
        let a = run_experiment_with_threads(&cfg, Some(1)).unwrap();
        let b = run_experiment_with_threads(&cfg, Some(8)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = ExperimentConfig::named("mcs_coverage").with_seed(11);
        cfg.replicates = Some(5);
        cfg.beta = Some(0.2);
        cfg.learners = Some(vec![LearnerSpec::TruncatedSeries { j: 2 }]);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, "mcs_coverage");
        assert_eq!(back.replicates, Some(5));
        assert_eq!(back.beta, Some(0.2));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"name": "mcs_coverage", "replicats": 5}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }
}
