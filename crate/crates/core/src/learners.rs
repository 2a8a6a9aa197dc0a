//! Symmetric batch estimators and online estimators with loss evaluation.
//!
//! Model coefficients always live in the covariate space: a fitted model
//! predicts `<coefficients, z>`. Constant-function learners (`zero`,
//! `mean`) therefore expect an intercept column `z[0] = 1` when their
//! prediction is meant to be a constant.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::rng;

/// Objective for SGD-type learners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SgdObjective {
    /// `phi(f; (y,z)) = (y - z'f)^2 / 2 + lambda ||f||^2 / 2`
    RidgeSquared { lambda: f64 },
    /// `phi(f; (y,z)) = -y (z'f) + log(1 + exp(z'f)) + lambda ||f||^2`
    RidgeLogistic { lambda: f64 },
}

/// SGD learner parameters. The smoothness/convexity constants
/// `(gamma, beta, c0, c2)` control the learning rate `alpha_t = t^{-a} / beta`
/// and the stability bounds checked by the diagnostics; constructors
/// below fill them from the standard radius-based formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdSpec {
    pub objective: SgdObjective,
    pub gamma: f64,
    pub beta: f64,
    pub c0: f64,
    pub c2: f64,
    /// Learning-rate exponent, in (0,1).
    pub a: f64,
    /// Optional cap on the norm of a single gradient step.
    pub step_cap: Option<f64>,
}

impl SgdSpec {
    /// Ridge squared objective with constants derived from the covariate
    /// radius `r_x`, parameter radius `r_f`, and penalty `lambda`:
    /// `gamma = lambda`, `beta = r_x^2 + lambda`,
    /// `c0 = r_x^2 (1 + r_f) + lambda r_f`, `c2 = 0`.
    pub fn ridge(r_x: f64, r_f: f64, lambda: f64, a: f64) -> Self {
        SgdSpec {
            objective: SgdObjective::RidgeSquared { lambda },
            gamma: lambda,
            beta: r_x * r_x + lambda,
            c0: r_x * r_x * (1.0 + r_f) + lambda * r_f,
            c2: 0.0,
            a,
            step_cap: None,
        }
    }

    /// Ridge logistic objective with constants `gamma = 2 lambda`,
    /// `beta = r_x / r_f + lambda`,
    /// `c0 = r_x^2 + log(1 + exp(r_x r_f)) / r_f + lambda r_f`,
    /// `c2 = r_x^2 / (4 r_f)`.
    pub fn ridge_logistic(r_x: f64, r_f: f64, lambda: f64, a: f64) -> Self {
        SgdSpec {
            objective: SgdObjective::RidgeLogistic { lambda },
            gamma: 2.0 * lambda,
            beta: r_x / r_f + lambda,
            c0: r_x * r_x + (1.0 + (r_x * r_f).exp()).ln() / r_f + lambda * r_f,
            c2: r_x * r_x / (4.0 * r_f),
            a,
            step_cap: None,
        }
    }

    pub fn learning_rate(&self, t: usize) -> f64 {
        (t as f64).powf(-self.a) / self.beta
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::invalid("sgd: exponent a must lie in (0,1)"));
        }
        if self.gamma > self.beta {
            return Err(Error::invalid("sgd: gamma must not exceed beta"));
        }
        if self.beta <= 0.0 || self.gamma < 0.0 || self.c0 < 0.0 || self.c2 < 0.0 {
            return Err(Error::invalid("sgd: constants must be nonnegative, beta > 0"));
        }
        Ok(())
    }
}

/// Sieve-SGD parameters: basis count `J_i = ceil(i^tau)`, learning rate
/// `alpha_i = c i^{-a}`, coordinate shrinkage `j^{-2w}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveSpec {
    pub tau: f64,
    pub a: f64,
    pub w: f64,
    pub c: f64,
}

impl SieveSpec {
    pub fn basis_count(&self, i: usize) -> usize {
        (i as f64).powf(self.tau).ceil() as usize
    }

    pub fn learning_rate(&self, i: usize) -> f64 {
        self.c * (i as f64).powf(-self.a)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::invalid("sieve: exponent a must lie in (0,1)"));
        }
        if self.w < 0.0 || self.tau < 0.0 || self.c <= 0.0 {
            return Err(Error::invalid("sieve: require w >= 0, tau >= 0, c > 0"));
        }
        Ok(())
    }
}

/// A fitting procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LearnerSpec {
    /// The zero function.
    ConstantZero,
    /// The sample mean of the responses, stored on the intercept coordinate.
    EmpiricalMean,
    /// Ridge regression by normal equations with per-sample penalty
    /// `lambda`; `lambda = 0` is plain least squares.
    RidgeClosedForm { lambda: f64 },
    /// Stochastic gradient descent over a strongly convex objective.
    Sgd(SgdSpec),
    /// Coordinatewise averaging truncated at level `j`:
    /// `f_j = mean(Y Z_j) 1(j <= J)`.
    TruncatedSeries { j: usize },
    /// Online sieve-SGD over the coordinate basis.
    SieveSgdOnline(SieveSpec),
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Sgd(s) => s.validate(),
            LearnerSpec::SieveSgdOnline(s) => s.validate(),
            LearnerSpec::RidgeClosedForm { lambda } => {
                if *lambda < 0.0 {
                    Err(Error::invalid("ridge: lambda must be nonnegative"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Whether `fit` consumes samples in a seeded random order.
    pub fn uses_fit_seed(&self) -> bool {
        matches!(self, LearnerSpec::Sgd(_))
    }
}

/// A fitted parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub coefficients: Vec<f64>,
    /// Truncation level for series-type learners: coordinates beyond it
    /// are exactly zero.
    pub truncation: Option<usize>,
    pub provenance: String,
}

impl Model {
    pub fn zeros(dim: usize, provenance: String) -> Self {
        Model {
            coefficients: vec![0.0; dim],
            truncation: None,
            provenance,
        }
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        linalg::dot(&self.coefficients, z)
    }

    fn check_finite(self) -> Result<Self> {
        if self.coefficients.iter().all(|c| c.is_finite()) {
            Ok(self)
        } else {
            Err(Error::numeric(format!(
                "{}: fitted coefficients are non-finite",
                self.provenance
            )))
        }
    }
}

/// Loss functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    Logistic,
    ConformityAbsResidual,
}

/// Evaluate a loss at a sample.
pub fn loss(model: &Model, x: &Sample, kind: LossKind) -> Result<f64> {
    let y = x.y.ok_or_else(|| {
        Error::invalid("supervised loss requires a response column")
    })?;
    let u = model.predict(&x.z);
    let value = match kind {
        LossKind::Squared => {
            let r = y - u;
            r * r
        }
        LossKind::Logistic => {
            // log(1 + e^u) - y u, computed without overflow.
            u.max(0.0) + (-u.abs()).exp().ln_1p() - y * u
        }
        LossKind::ConformityAbsResidual => (y - u).abs(),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric("loss evaluation is non-finite"))
    }
}

/// Objective value, used by the finite-difference gradient checks.
pub fn sgd_objective_value(spec: &SgdSpec, f: &[f64], x: &Sample) -> Result<f64> {
    let y = x
        .y
        .ok_or_else(|| Error::invalid("sgd objective requires a response"))?;
    let u = linalg::dot(f, &x.z);
    let sq_norm: f64 = f.iter().map(|v| v * v).sum();
    Ok(match spec.objective {
        SgdObjective::RidgeSquared { lambda } => {
            let r = y - u;
            0.5 * r * r + 0.5 * lambda * sq_norm
        }
        SgdObjective::RidgeLogistic { lambda } => {
            u.max(0.0) + (-u.abs()).exp().ln_1p() - y * u + lambda * sq_norm
        }
    })
}

/// Gradient of the SGD objective at `f`.
pub fn sgd_gradient(spec: &SgdSpec, f: &[f64], x: &Sample) -> Result<Vec<f64>> {
    let y = x
        .y
        .ok_or_else(|| Error::invalid("sgd objective requires a response"))?;
    let u = linalg::dot(f, &x.z);
    Ok(match spec.objective {
        SgdObjective::RidgeSquared { lambda } => {
            let r = y - u;
            f.iter()
                .zip(&x.z)
                .map(|(fj, zj)| -r * zj + lambda * fj)
                .collect()
        }
        SgdObjective::RidgeLogistic { lambda } => {
            let sig = 1.0 / (1.0 + (-u).exp());
            f.iter()
                .zip(&x.z)
                .map(|(fj, zj)| (sig - y) * zj + 2.0 * lambda * fj)
                .collect()
        }
    })
}

/// One SGD step at step index `t >= 1` with `alpha_t = t^{-a} / beta`.
pub fn sgd_step(model: &Model, x: &Sample, t: usize, spec: &SgdSpec) -> Result<Model> {
    if t == 0 {
        return Err(Error::invalid("sgd step index starts at 1"));
    }
    let alpha = spec.learning_rate(t);
    let grad = sgd_gradient(spec, &model.coefficients, x)?;
    let mut delta: Vec<f64> = grad.iter().map(|g| -alpha * g).collect();
    if let Some(cap) = spec.step_cap {
        let norm = linalg::norm2(&delta);
        if norm > cap {
            let scale = cap / norm;
            for d in &mut delta {
                *d *= scale;
            }
        }
    }
    let coefficients: Vec<f64> = model
        .coefficients
        .iter()
        .zip(&delta)
        .map(|(c, d)| c + d)
        .collect();
    Model {
        coefficients,
        truncation: None,
        provenance: model.provenance.clone(),
    }
    .check_finite()
}

/// One sieve-SGD step at step index `i >= 1`:
/// `f_j += alpha_i (y - <f, z>) j^{-2w} z_j` for `j <= J_i`.
pub fn sieve_step(model: &Model, x: &Sample, i: usize, spec: &SieveSpec) -> Result<Model> {
    if i == 0 {
        return Err(Error::invalid("sieve step index starts at 1"));
    }
    let j_i = spec.basis_count(i);
    if x.z.len() < j_i {
        return Err(Error::invalid(format!(
            "sieve: covariate dimension {} is smaller than J_i = {}",
            x.z.len(),
            j_i
        )));
    }
    let y = x
        .y
        .ok_or_else(|| Error::invalid("sieve update requires a response"))?;
    let alpha = spec.learning_rate(i);
    let resid = y - model.predict(&x.z);
    let mut coefficients = model.coefficients.clone();
    for j in 0..j_i {
        let shrink = ((j + 1) as f64).powf(-2.0 * spec.w);
        coefficients[j] += alpha * resid * shrink * x.z[j];
    }
    Model {
        coefficients,
        truncation: Some(j_i.max(model.truncation.unwrap_or(0))),
        provenance: model.provenance.clone(),
    }
    .check_finite()
}

/// Fit a learner on a dataset.
///
/// Deterministic given `(spec, d, seed)`. SGD consumes the samples in a
/// seeded random order, which restores symmetry over the input ordering;
/// all other learners ignore the seed. Sieve-SGD consumes samples in the
/// given order (the order is semantic for online estimators).
pub fn fit(spec: &LearnerSpec, d: &Dataset, seed: u64) -> Result<Model> {
    spec.validate()?;
    match spec {
        LearnerSpec::Sgd(sgd) => {
            let mut order: Vec<usize> = (0..d.len()).collect();
            let mut r = rng::stream(seed, &[0x5347_44]);
            order.shuffle(&mut r);
            let samples: Vec<&Sample> = order.iter().map(|&i| d.sample(i)).collect();
            fit_sgd_stream(sgd, &samples, spec.label())
        }
        _ => fit_in_order(spec, d),
    }
}

/// Fit without any reordering: for online learners the dataset order is
/// the stream order. Closed-form learners are order-free so this agrees
/// with `fit` for them exactly.
pub fn fit_in_order(spec: &LearnerSpec, d: &Dataset) -> Result<Model> {
    spec.validate()?;
    if d.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    let dim = d.dim();
    let label = spec.label();
    match spec {
        LearnerSpec::ConstantZero => Ok(Model::zeros(dim, label)),
        LearnerSpec::EmpiricalMean => {
            let mut acc = 0.0;
            for s in d.iter() {
                acc += s
                    .y
                    .ok_or_else(|| Error::invalid("mean learner requires responses"))?;
            }
            let mut m = Model::zeros(dim, label);
            m.coefficients[0] = acc / d.len() as f64;
            m.check_finite()
        }
        LearnerSpec::RidgeClosedForm { lambda } => fit_ridge(d, *lambda, label),
        LearnerSpec::TruncatedSeries { j } => {
            if *j > dim {
                return Err(Error::invalid(format!(
                    "truncated series level J={} exceeds the covariate dimension {}",
                    j, dim
                )));
            }
            let mut m = Model::zeros(dim, label);
            for s in d.iter() {
                let y = s
                    .y
                    .ok_or_else(|| Error::invalid("truncated series requires responses"))?;
                for (fj, zj) in m.coefficients.iter_mut().zip(&s.z).take(*j) {
                    *fj += y * zj;
                }
            }
            for fj in m.coefficients.iter_mut().take(*j) {
                *fj /= d.len() as f64;
            }
            m.truncation = Some(*j);
            m.check_finite()
        }
        LearnerSpec::Sgd(sgd) => {
            let samples: Vec<&Sample> = d.iter().collect();
            fit_sgd_stream(sgd, &samples, label)
        }
        LearnerSpec::SieveSgdOnline(sieve) => {
            let mut m = Model::zeros(dim, label);
            m.truncation = Some(0);
            for (pos, s) in d.iter().enumerate() {
                m = sieve_step(&m, s, pos + 1, sieve)?;
            }
            Ok(m)
        }
    }
}

fn fit_sgd_stream(sgd: &SgdSpec, samples: &[&Sample], label: String) -> Result<Model> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    let mut m = Model::zeros(samples[0].z.len(), label);
    for (pos, s) in samples.iter().enumerate() {
        m = sgd_step(&m, s, pos + 1, sgd)?;
    }
    Ok(m)
}

fn fit_ridge(d: &Dataset, lambda: f64, label: String) -> Result<Model> {
    let p = d.dim();
    let n = d.len() as f64;
    let mut gram = SquareMatrix::zeros(p);
    let mut rhs = vec![0.0; p];
    for s in d.iter() {
        let y = s
            .y
            .ok_or_else(|| Error::invalid("ridge requires responses"))?;
        for i in 0..p {
            rhs[i] += s.z[i] * y / n;
            for j in 0..p {
                gram[(i, j)] += s.z[i] * s.z[j] / n;
            }
        }
    }
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let coefficients = linalg::solve(gram, rhs)?;
    Model {
        coefficients,
        truncation: None,
        provenance: label,
    }
    .check_finite()
}

/// Single-pass online estimator state: the current parameter, the step
/// count, and running accumulators. No sample history is retained.
#[derive(Clone, Debug)]
pub struct OnlineState {
    spec: LearnerSpec,
    step: usize,
    model: Model,
    // Running response sum for the mean learner, running Y*Z sums for the
    // truncated-series learner.
    acc: Vec<f64>,
}

impl OnlineState {
    pub fn new(spec: LearnerSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        match spec {
            LearnerSpec::RidgeClosedForm { .. } => Err(Error::invalid(
                "ridge_closed_form is a batch learner; it has no online update",
            )),
            LearnerSpec::TruncatedSeries { j } if j > dim => Err(Error::invalid(
                "truncated series level exceeds the covariate dimension",
            )),
            _ => {
                let label = spec.label();
                let mut model = Model::zeros(dim, label);
                if let LearnerSpec::SieveSgdOnline(_) | LearnerSpec::TruncatedSeries { .. } = spec {
                    model.truncation = Some(match spec {
                        LearnerSpec::TruncatedSeries { j } => j,
                        _ => 0,
                    });
                }
                Ok(OnlineState {
                    acc: vec![0.0; dim],
                    spec,
                    step: 0,
                    model,
                })
            }
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }
}

/// Consume one sample and return the updated state.
pub fn online_update(state: &OnlineState, x: &Sample) -> Result<OnlineState> {
    let i = state.step + 1;
    let mut next = state.clone();
    next.step = i;
    match &state.spec {
        LearnerSpec::ConstantZero => {}
        LearnerSpec::EmpiricalMean => {
            let y = x
                .y
                .ok_or_else(|| Error::invalid("mean learner requires responses"))?;
            next.acc[0] += y;
            next.model.coefficients[0] = next.acc[0] / i as f64;
        }
        LearnerSpec::TruncatedSeries { j } => {
            let y = x
                .y
                .ok_or_else(|| Error::invalid("truncated series requires responses"))?;
            for (aj, zj) in next.acc.iter_mut().zip(&x.z).take(*j) {
                *aj += y * zj;
            }
            for (fj, aj) in next
                .model
                .coefficients
                .iter_mut()
                .zip(&next.acc)
                .take(*j)
            {
                *fj = aj / i as f64;
            }
        }
        LearnerSpec::Sgd(sgd) => {
            next.model = sgd_step(&state.model, x, i, sgd)?;
        }
        LearnerSpec::SieveSgdOnline(sieve) => {
            next.model = sieve_step(&state.model, x, i, sieve)?;
        }
        LearnerSpec::RidgeClosedForm { .. } => unreachable!("rejected at construction"),
    }
    Ok(next)
}

// --- compact "kind:params" grammar, shared by the CLI and config files ---

impl std::fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LearnerSpec::ConstantZero => write!(f, "zero"),
            LearnerSpec::EmpiricalMean => write!(f, "mean"),
            LearnerSpec::RidgeClosedForm { lambda } => write!(f, "ridge:{}", lambda),
            LearnerSpec::TruncatedSeries { j } => write!(f, "trunc:{}", j),
            LearnerSpec::Sgd(s) => {
                let obj = match s.objective {
                    SgdObjective::RidgeSquared { lambda } => format!("ridge,lambda={}", lambda),
                    SgdObjective::RidgeLogistic { lambda } => {
                        format!("logistic,lambda={}", lambda)
                    }
                };
                write!(
                    f,
                    "sgd:{},a={},gamma={},beta={},c0={},c2={}",
                    obj, s.a, s.gamma, s.beta, s.c0, s.c2
                )?;
                if let Some(cap) = s.step_cap {
                    write!(f, ",cap={}", cap)?;
                }
                Ok(())
            }
            LearnerSpec::SieveSgdOnline(s) => {
                write!(f, "sieve:tau={},a={},w={},c={}", s.tau, s.a, s.w, s.c)
            }
        }
    }
}

fn parse_kv(parts: &[&str]) -> Result<Vec<(String, f64)>> {
    parts
        .iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got '{}'", p)))?;
            let value: f64 = v
                .parse()
                .map_err(|_| Error::invalid(format!("bad numeric value in '{}'", p)))?;
            Ok((k.to_string(), value))
        })
        .collect()
}

fn take(kv: &[(String, f64)], key: &str) -> Option<f64> {
    kv.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
}

impl std::str::FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, r),
            None => (s, ""),
        };
        let spec = match kind {
            "zero" => LearnerSpec::ConstantZero,
            "mean" => LearnerSpec::EmpiricalMean,
            "ridge" => {
                let lambda: f64 = rest
                    .parse()
                    .map_err(|_| Error::invalid(format!("ridge: bad lambda '{}'", rest)))?;
                LearnerSpec::RidgeClosedForm { lambda }
            }
            "trunc" => {
                let j: usize = rest
                    .parse()
                    .map_err(|_| Error::invalid(format!("trunc: bad level '{}'", rest)))?;
                LearnerSpec::TruncatedSeries { j }
            }
            "sgd" => {
                let parts: Vec<&str> = rest.split(',').filter(|p| !p.is_empty()).collect();
                if parts.is_empty() {
                    return Err(Error::invalid("sgd: missing objective"));
                }
                let objective_kind = parts[0];
                let kv = parse_kv(&parts[1..])?;
                let lambda = take(&kv, "lambda")
                    .ok_or_else(|| Error::invalid("sgd: missing lambda"))?;
                let a = take(&kv, "a").ok_or_else(|| Error::invalid("sgd: missing a"))?;
                let mut base = match objective_kind {
                    "ridge" => {
                        let rx = take(&kv, "rx").unwrap_or(1.0);
                        let rf = take(&kv, "rf").unwrap_or(1.0);
                        SgdSpec::ridge(rx, rf, lambda, a)
                    }
                    "logistic" => {
                        let rx = take(&kv, "rx").unwrap_or(1.0);
                        let rf = take(&kv, "rf").unwrap_or(1.0);
                        SgdSpec::ridge_logistic(rx, rf, lambda, a)
                    }
                    other => {
                        return Err(Error::invalid(format!(
                            "sgd: unknown objective '{}' (expected ridge or logistic)",
                            other
                        )))
                    }
                };
                if let Some(v) = take(&kv, "gamma") {
                    base.gamma = v;
                }
                if let Some(v) = take(&kv, "beta") {
                    base.beta = v;
                }
                if let Some(v) = take(&kv, "c0") {
                    base.c0 = v;
                }
                if let Some(v) = take(&kv, "c2") {
                    base.c2 = v;
                }
                base.step_cap = take(&kv, "cap");
                LearnerSpec::Sgd(base)
            }
            "sieve" => {
                let kv = parse_kv(&rest.split(',').filter(|p| !p.is_empty()).collect::<Vec<_>>())?;
                let tau = take(&kv, "tau").ok_or_else(|| Error::invalid("sieve: missing tau"))?;
                let a = take(&kv, "a").ok_or_else(|| Error::invalid("sieve: missing a"))?;
                let w = take(&kv, "w").ok_or_else(|| Error::invalid("sieve: missing w"))?;
                let c = take(&kv, "c").unwrap_or(1.0);
                LearnerSpec::SieveSgdOnline(SieveSpec { tau, a, w, c })
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown learner kind '{}' (expected zero|mean|ridge|trunc|sgd|sieve)",
                    other
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for LearnerSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LearnerSpec> for String {
    fn from(spec: LearnerSpec) -> String {
        spec.to_string()
    }
}
