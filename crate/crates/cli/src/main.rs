//! `cvstab`: stability-aware cross-validation inference from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/numeric error. All error
//! output goes to stderr with an `error:` prefix. Reports are
//! deterministic: same argv + same files + same seed => byte-identical
//! report.json (timing is logged to stderr, never serialized).

mod dataset;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cvstab_core::conformal;
use cvstab_core::cv_engine::{self, GeneratorSpec, MarginalFamily, ResponseKind, RiskOracle};
use cvstab_core::data;
use cvstab_core::experiments::{self, ExperimentConfig};
use cvstab_core::gauss::QuantileEngine;
use cvstab_core::learners::{LearnerSpec, LossKind};
use cvstab_core::maxmean;
use cvstab_core::mcs;
use cvstab_core::rollval;
use cvstab_core::stability::{self, StabilityTarget};

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 1,
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<cvstab_core::Error> for CliError {
    fn from(e: cvstab_core::Error) -> Self {
        CliError::data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "cvstab",
    version,
    about = "Stability-aware cross-validation inference",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Master seed for all randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker count (results are identical at any value).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for report.json (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for tabular payloads.
    #[arg(long, global = true, default_value = "json")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// K-fold CV risk estimates with variance and correlation.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: String,
        #[arg(long)]
        k: usize,
        /// Comma-separated learner specs (zero | mean | ridge:L |
        /// trunc:J | sgd:... | sieve:...).
        #[arg(long)]
        learners: String,
        #[arg(long, default_value = "squared")]
        loss: String,
        /// Permute indices with this seed before blocking into folds.
        #[arg(long)]
        shuffle_seed: Option<u64>,
        /// Drop the trailing n mod K samples instead of rejecting.
        #[arg(long)]
        truncate: bool,
    },
    /// Model confidence set over CV risks.
    Mcs {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        learners: String,
        #[arg(long, default_value = "squared")]
        loss: String,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        /// naive or diff.
        #[arg(long, default_value = "diff")]
        method: String,
        #[arg(long, default_value_t = 200_000)]
        draws: usize,
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[arg(long)]
        truncate: bool,
    },
    /// Cross-validated softmax test for the max of a mean vector.
    Maxmean {
        #[command(flatten)]
        common: CommonArgs,
        /// Matrix-layout CSV (n rows, m columns).
        #[arg(long)]
        data: String,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        /// Ascending candidate temperatures (should include 0).
        #[arg(long, default_value = "0,0.5,1,2,4,8")]
        lambdas: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Leave-two-out bootstrap triplets.
        #[arg(long, default_value_t = 200)]
        boot: usize,
    },
    /// Argmin confidence set for a mean vector.
    Argmin {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: String,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value = "0,0.5,1,2,4,8")]
        lambdas: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        boot: usize,
    },
    /// Cross-conformal p-values and prediction sets.
    Conformal {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: String,
        #[arg(long)]
        k: usize,
        /// Score model (absolute residual of this learner).
        #[arg(long, default_value = "ridge:0.1")]
        score: String,
        /// Query covariates, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        z: String,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Response grid lo:hi:points.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Optional single query response for a p-value.
        #[arg(long, allow_hyphen_values = true)]
        query_y: Option<f64>,
    },
    /// Online rolling validation over a streaming CSV or a synthetic
    /// generator.
    Rollval {
        #[command(flatten)]
        common: CommonArgs,
        /// Streaming CSV (row order is the stream). Omit to stream from
        /// the generator flags below.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        candidates: String,
        #[arg(long, default_value = "squared")]
        loss: String,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        /// Emit a checkpoint every this many samples (stderr).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        /// Generator: true coefficients (enables generator streaming).
        #[arg(long, allow_hyphen_values = true)]
        gen_fstar: Option<String>,
        /// Generator: stream length.
        #[arg(long)]
        gen_n: Option<usize>,
        /// Generator: noise variance.
        #[arg(long, default_value_t = 1.0)]
        gen_sigma_eps2: f64,
        /// Generator: gaussian or uniform marginals.
        #[arg(long, default_value = "gaussian")]
        gen_family: String,
    },
    /// Perturb-one stability diagnostics on a synthetic generator.
    Stability {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        learner: String,
        /// parameter | loss | risk.
        #[arg(long, default_value = "parameter")]
        target: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        b: usize,
        /// True coefficients, comma separated.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        fstar: String,
        #[arg(long, default_value_t = 1.0)]
        sigma_eps2: f64,
        /// gaussian or uniform covariates/noise.
        #[arg(long, default_value = "gaussian")]
        family: String,
        /// Treat coordinate 1 as an intercept column.
        #[arg(long)]
        intercept: bool,
    },
    /// Run a registered experiment.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        /// Registered experiment name.
        name: String,
        /// JSON config file overriding the preset fields.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Wrapper written as report.json.
#[derive(Serialize)]
struct Report {
    command: String,
    config: serde_json::Value,
    seed: u64,
    version: &'static str,
    results: serde_json::Value,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success; its usage
            // errors already carry the "error:" prefix.
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    let start = std::time::Instant::now();
    match dispatch(cli.command) {
        Ok(()) => {
            eprintln!("done in {:.3}s", start.elapsed().as_secs_f64());
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.code);
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Cv {
            common,
            data,
            k,
            learners,
            loss,
            shuffle_seed,
            truncate,
        } => with_pool(common.threads, || {
            cmd_cv(&common, &data, k, &learners, &loss, shuffle_seed, truncate)
        }),
        Command::Mcs {
            common,
            data,
            k,
            learners,
            loss,
            beta,
            method,
            draws,
            shuffle_seed,
            truncate,
        } => with_pool(common.threads, || {
            cmd_mcs(
                &common,
                &data,
                k,
                &learners,
                &loss,
                beta,
                &method,
                draws,
                shuffle_seed,
                truncate,
            )
        }),
        Command::Maxmean {
            common,
            data,
            beta,
            lambdas,
            epsilon,
            boot,
        } => with_pool(common.threads, || {
            cmd_maxmean(&common, &data, beta, &lambdas, epsilon, boot)
        }),
        Command::Argmin {
            common,
            data,
            beta,
            lambdas,
            epsilon,
            boot,
        } => with_pool(common.threads, || {
            cmd_argmin(&common, &data, beta, &lambdas, epsilon, boot)
        }),
        Command::Conformal {
            common,
            data,
            k,
            score,
            z,
            alpha,
            grid,
            query_y,
        } => with_pool(common.threads, || {
            cmd_conformal(&common, &data, k, &score, &z, alpha, &grid, query_y)
        }),
        Command::Rollval {
            common,
            data,
            candidates,
            loss,
            xi,
            checkpoint_every,
            gen_fstar,
            gen_n,
            gen_sigma_eps2,
            gen_family,
        } => with_pool(common.threads, || {
            cmd_rollval(
                &common,
                data.as_deref(),
                &candidates,
                &loss,
                xi,
                checkpoint_every,
                gen_fstar.as_deref(),
                gen_n,
                gen_sigma_eps2,
                &gen_family,
            )
        }),
        Command::Stability {
            common,
            learner,
            target,
            n,
            b,
            fstar,
            sigma_eps2,
            family,
            intercept,
        } => with_pool(common.threads, || {
            cmd_stability(
                &common, &learner, &target, n, b, &fstar, sigma_eps2, &family, intercept,
            )
        }),
        Command::Experiment {
            common,
            name,
            config,
        } => cmd_experiment(&common, &name, config),
    }
}

fn with_pool<F>(threads: Option<usize>, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    match threads {
        None => f(),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

fn parse_loss(name: &str) -> Result<LossKind, CliError> {
    match name {
        "squared" => Ok(LossKind::Squared),
        "logistic" => Ok(LossKind::Logistic),
        "abs_residual" => Ok(LossKind::ConformityAbsResidual),
        other => Err(CliError::usage(format!(
            "unknown loss '{other}' (squared | logistic | abs_residual)"
        ))),
    }
}

/// Split a comma-separated learner list, re-joining fragments that belong
/// to a parameterized spec ("sgd:ridge,lambda=1,a=0.5,zero" is sgd + zero).
fn parse_learner_list(text: &str) -> Result<Vec<LearnerSpec>, CliError> {
    let mut groups: Vec<String> = Vec::new();
    for piece in text.split(',') {
        let starts_new = ["zero", "mean", "ridge:", "trunc:", "sgd:", "sieve:"]
            .iter()
            .any(|prefix| piece == *prefix || piece.starts_with(prefix));
        if starts_new || groups.is_empty() {
            groups.push(piece.to_string());
        } else {
            let last = groups.last_mut().unwrap();
            last.push(',');
            last.push_str(piece);
        }
    }
    groups
        .iter()
        .map(|g| {
            g.parse::<LearnerSpec>()
                .map_err(|e| CliError::usage(e.to_string()))
        })
        .collect()
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad {what} value '{v}'")))
        })
        .collect()
}

fn emit(common: &CommonArgs, report: &Report) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::data(format!("serialize: {e}")))?;
    match &common.out {
        None => {
            println!("{json}");
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
            let path = dir.join("report.json");
            std::fs::write(&path, json.as_bytes())
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn write_csv(
    common: &CommonArgs,
    name: &str,
    header: &str,
    rows: &[String],
) -> Result<(), CliError> {
    let text = format!("{header}\n{}\n", rows.join("\n"));
    match &common.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            std::fs::write(&path, text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn prepared_plan(
    d: &data::Dataset,
    k: usize,
    shuffle_seed: Option<u64>,
    truncate: bool,
) -> Result<(data::Dataset, data::FoldPlan), CliError> {
    let n = d.len();
    if truncate && k > 0 && n % k != 0 {
        let keep = n - n % k;
        eprintln!(
            "warning: dropping {} trailing samples so K={k} divides n",
            n % k
        );
        let kept = d.truncated(keep)?;
        let plan = data::make_fold_plan(keep, k, shuffle_seed)?;
        return Ok((kept, plan));
    }
    let plan = data::make_fold_plan(n, k, shuffle_seed)?;
    Ok((d.clone(), plan))
}

#[allow(clippy::too_many_arguments)]
fn cmd_cv(
    common: &CommonArgs,
    data_path: &str,
    k: usize,
    learners: &str,
    loss: &str,
    shuffle_seed: Option<u64>,
    truncate: bool,
) -> Result<(), CliError> {
    let specs = parse_learner_list(learners)?;
    let loss_kind = parse_loss(loss)?;
    let d = dataset::load_supervised(data_path)?;
    let (d, plan) = prepared_plan(&d, k, shuffle_seed, truncate)?;
    let matrix = cv_engine::cv_losses(&specs, &d, &plan, loss_kind, common.seed)?;
    let summary = cv_engine::summarize(&matrix)?;
    if common.format == "csv" {
        let header = matrix.labels.join(",");
        let rows: Vec<String> = (0..matrix.n())
            .map(|i| {
                (0..matrix.m())
                    .map(|r| matrix.entry(i, r).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        return write_csv(common, "losses.csv", &header, &rows);
    }
    let report = Report {
        command: "cv".into(),
        config: serde_json::json!({
            "data": data_path, "k": k, "loss": loss,
            "learners": specs, "n": d.len(),
            "dim": d.dim(), "shuffle_seed": shuffle_seed,
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::to_value(&summary).unwrap(),
    };
    emit(common, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mcs(
    common: &CommonArgs,
    data_path: &str,
    k: usize,
    learners: &str,
    loss: &str,
    beta: f64,
    method: &str,
    draws: usize,
    shuffle_seed: Option<u64>,
    truncate: bool,
) -> Result<(), CliError> {
    let specs = parse_learner_list(learners)?;
    let loss_kind = parse_loss(loss)?;
    let d = dataset::load_supervised(data_path)?;
    let (d, plan) = prepared_plan(&d, k, shuffle_seed, truncate)?;
    let matrix = cv_engine::cv_losses(&specs, &d, &plan, loss_kind, common.seed)?;
    let engine = QuantileEngine::new(draws);
    let set = match method {
        "naive" => {
            let summary = cv_engine::summarize(&matrix)?;
            mcs::mcs_naive(&summary, d.len(), beta, &engine, common.seed)?
        }
        "diff" => mcs::mcs_diff(&matrix, d.len(), beta, &engine, common.seed)?,
        other => {
            return Err(CliError::usage(format!(
                "unknown method '{other}' (naive | diff)"
            )))
        }
    };
    let report = Report {
        command: "mcs".into(),
        config: serde_json::json!({
            "data": data_path, "k": k, "loss": loss, "learners": specs,
            "beta": beta, "method": method, "draws": draws,
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::to_value(&set).unwrap(),
    };
    emit(common, &report)
}

fn cmd_maxmean(
    common: &CommonArgs,
    data_path: &str,
    beta: f64,
    lambdas: &str,
    epsilon: f64,
    boot: usize,
) -> Result<(), CliError> {
    let x = dataset::load_matrix(data_path)?;
    let candidates = parse_f64_list(lambdas, "lambda")?;
    let selection = maxmean::select_lambda(&x, &candidates, epsilon, boot, common.seed)?;
    let state = maxmean::loo_statistic(&x, selection.chosen)?;
    let test = maxmean::test_max_mean(&state, x.n(), beta)?;
    let report = Report {
        command: "maxmean".into(),
        config: serde_json::json!({
            "data": data_path, "beta": beta, "lambda_candidates": candidates,
            "epsilon": epsilon, "boot": boot, "n": x.n(), "m": x.m(),
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::json!({
            "lambda": selection.chosen,
            "lambda_fallback": selection.fallback,
            "t_n": state.t_stat,
            "sigma_hat": state.sigma_hat,
            "lower_bound": test.lower_bound,
            "reject": test.reject,
            "degenerate": test.degenerate,
        }),
    };
    emit(common, &report)
}

fn cmd_argmin(
    common: &CommonArgs,
    data_path: &str,
    beta: f64,
    lambdas: &str,
    epsilon: f64,
    boot: usize,
) -> Result<(), CliError> {
    let x = dataset::load_matrix(data_path)?;
    let candidates = parse_f64_list(lambdas, "lambda")?;
    let set = maxmean::argmin_set(&x, beta, &candidates, epsilon, boot, common.seed)?;
    let report = Report {
        command: "argmin".into(),
        config: serde_json::json!({
            "data": data_path, "beta": beta, "lambda_candidates": candidates,
            "epsilon": epsilon, "boot": boot, "n": x.n(), "m": x.m(),
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::json!({ "argmin_set": set }),
    };
    emit(common, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_conformal(
    common: &CommonArgs,
    data_path: &str,
    k: usize,
    score: &str,
    z: &str,
    alpha: f64,
    grid: &str,
    query_y: Option<f64>,
) -> Result<(), CliError> {
    let d = dataset::load_supervised(data_path)?;
    let score_spec: LearnerSpec = score
        .parse()
        .map_err(|e: cvstab_core::Error| CliError::usage(e.to_string()))?;
    let zq = parse_f64_list(z, "z")?;
    let parts: Vec<&str> = grid.split(':').map(|p| p.trim()).collect();
    if parts.len() != 3 {
        return Err(CliError::usage("grid must be lo:hi:points"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::usage("grid: bad lo"))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::usage("grid: bad hi"))?;
    let points: usize = parts[2]
        .parse()
        .map_err(|_| CliError::usage("grid: bad point count"))?;
    if points < 2 || hi <= lo {
        return Err(CliError::usage("grid needs hi > lo and at least 2 points"));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let y_grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let result = conformal::prediction_set(&d, k, &score_spec, &zq, alpha, &y_grid, common.seed)?;
    let query_p = match query_y {
        None => None,
        Some(y) => Some(conformal::cross_conformal_p(
            &d, k, &score_spec, y, &zq, common.seed,
        )?),
    };
    let report = Report {
        command: "conformal".into(),
        config: serde_json::json!({
            "data": data_path, "k": k, "score": score_spec, "z": zq,
            "alpha": alpha, "grid": {"lo": lo, "hi": hi, "points": points},
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::json!({
            "alpha": result.alpha,
            "p_values": result.p_values,
            "intervals": result.intervals,
            "query_p": query_p,
        }),
    };
    emit(common, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_rollval(
    common: &CommonArgs,
    data_path: Option<&str>,
    candidates: &str,
    loss: &str,
    xi: f64,
    checkpoint_every: usize,
    gen_fstar: Option<&str>,
    gen_n: Option<usize>,
    gen_sigma_eps2: f64,
    gen_family: &str,
) -> Result<(), CliError> {
    let specs = parse_learner_list(candidates)?;
    let loss_kind = parse_loss(loss)?;
    let (stream, source): (Vec<cvstab_core::data::Sample>, serde_json::Value) =
        match (data_path, gen_fstar) {
            (Some(path), None) => {
                let d = dataset::load_supervised(path)?;
                (d.samples().to_vec(), serde_json::json!({"data": path}))
            }
            (None, Some(fstar)) => {
                let n = gen_n.ok_or_else(|| {
                    CliError::usage("generator streaming needs --gen-n")
                })?;
                let f_star = parse_f64_list(fstar, "gen-fstar")?;
                let fam = match gen_family {
                    "gaussian" => MarginalFamily::Gaussian,
                    "uniform" => MarginalFamily::BoundedUniform,
                    other => {
                        return Err(CliError::usage(format!(
                            "unknown family '{other}' (gaussian | uniform)"
                        )))
                    }
                };
                let dim = f_star.len();
                let gen = GeneratorSpec {
                    oracle: RiskOracle {
                        f_star,
                        sigma_eps2: gen_sigma_eps2,
                        sigma_z_diag: vec![1.0; dim],
                    },
                    z_family: fam,
                    noise_family: fam,
                    intercept: false,
                    response: ResponseKind::Linear,
                };
                gen.validate()?;
                let mut r = cvstab_core::rng::stream(common.seed, &[0x726f_6c6c]);
                let stream = (0..n).map(|_| gen.draw_sample(&mut r)).collect();
                (stream, serde_json::json!({"generator": gen, "n": n}))
            }
            _ => {
                return Err(CliError::usage(
                    "rollval needs exactly one of --data or --gen-fstar",
                ))
            }
        };
    let dim = stream
        .first()
        .map(|s| s.z.len())
        .ok_or_else(|| CliError::data("empty stream"))?;
    let mut state = rollval::RollingState::new(&specs, dim, xi, loss_kind)?;
    let mut checkpoints = Vec::new();
    for (i, x) in stream.iter().enumerate() {
        state = rollval::rolling_update(&state, x)?;
        if checkpoint_every > 0 && (i + 1) % checkpoint_every == 0 {
            let cp = state.checkpoint();
            eprintln!("{}", serde_json::to_string(&cp).unwrap());
            checkpoints.push(cp);
        }
    }
    let report = Report {
        command: "rollval".into(),
        config: serde_json::json!({
            "source": source, "candidates": specs, "loss": loss, "xi": xi,
            "checkpoint_every": checkpoint_every,
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::json!({
            "n": state.step(),
            "accumulators": state.accumulators(),
            "selected": rollval::select(&state),
            "checkpoints": checkpoints,
        }),
    };
    emit(common, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_stability(
    common: &CommonArgs,
    learner: &str,
    target: &str,
    n: usize,
    b: usize,
    fstar: &str,
    sigma_eps2: f64,
    family: &str,
    intercept: bool,
) -> Result<(), CliError> {
    let spec: LearnerSpec = learner
        .parse()
        .map_err(|e: cvstab_core::Error| CliError::usage(e.to_string()))?;
    let f_star = parse_f64_list(fstar, "fstar")?;
    let fam = match family {
        "gaussian" => MarginalFamily::Gaussian,
        "uniform" => MarginalFamily::BoundedUniform,
        other => {
            return Err(CliError::usage(format!(
                "unknown family '{other}' (gaussian | uniform)"
            )))
        }
    };
    let dim = f_star.len();
    let gen = GeneratorSpec {
        oracle: RiskOracle {
            f_star,
            sigma_eps2,
            sigma_z_diag: vec![1.0; dim],
        },
        z_family: fam,
        noise_family: fam,
        intercept,
        response: ResponseKind::Linear,
    };
    let target_kind = match target {
        "parameter" => StabilityTarget::Parameter,
        "loss" => StabilityTarget::Loss(LossKind::Squared),
        "risk" => StabilityTarget::Risk,
        other => {
            return Err(CliError::usage(format!(
                "unknown target '{other}' (parameter | loss | risk)"
            )))
        }
    };
    let est = stability::nabla_samples(&[spec], &gen, n, target_kind, b, common.seed)?;
    // First-order SGD bound columns, when they apply.
    let bound_cols = match (&spec, &target_kind) {
        (LearnerSpec::Sgd(sgd), StabilityTarget::Parameter) => {
            let bound = 2f64.powf(1.0 + sgd.a) * sgd.c0 / sgd.beta * (n as f64).powf(-sgd.a);
            let max = est.samples.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            (bound.to_string(), (max <= bound).to_string())
        }
        _ => (String::new(), String::new()),
    };
    if common.format == "csv" {
        let rows: Vec<String> = est
            .q_grid
            .iter()
            .zip(&est.lq)
            .map(|(q, lq)| {
                format!(
                    "{},{},{},{},{},{},{},{}",
                    est.n, est.target, q, lq, est.sw_kappa, est.sw_alpha,
                    bound_cols.0, bound_cols.1
                )
            })
            .collect();
        return write_csv(
            common,
            "stability.csv",
            "n,target,q,lq,kappa,alpha,bound,pass",
            &rows,
        );
    }
    let report = Report {
        command: "stability".into(),
        config: serde_json::json!({
            "learner": learner, "target": target, "n": n, "b": b,
            "generator": gen,
        }),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        results: serde_json::to_value(&est).unwrap(),
    };
    emit(common, &report)
}

fn cmd_experiment(
    common: &CommonArgs,
    name: &str,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = match config {
        None => ExperimentConfig::named(name),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let mut parsed: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            if parsed.name.is_empty() {
                parsed.name = name.to_string();
            } else if parsed.name != name {
                return Err(CliError::usage(format!(
                    "config names experiment '{}' but '{}' was requested",
                    parsed.name, name
                )));
            }
            parsed
        }
    };
    cfg.seed = common.seed;
    let report = experiments::run_experiment_with_threads(&cfg, common.threads)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        let path = dir.join("report.json");
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::data(format!("serialize: {e}")))?;
        std::fs::write(&path, json)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        // Raw per-replicate statistics as plot-ready CSV, one file per key.
        for (key, values) in &report.raw {
            let csv_path = dir.join(format!("{key}.csv"));
            let mut text = String::from("value\n");
            for v in values {
                text.push_str(&format!("{v}\n"));
            }
            std::fs::write(&csv_path, text)
                .map_err(|e| CliError::data(format!("{}: {e}", csv_path.display())))?;
        }
        eprintln!("wrote {}", path.display());
    } else {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::data(format!("serialize: {e}")))?;
        println!("{json}");
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "experiment '{}' failed its checks",
            report.name
        )))
    }
}
