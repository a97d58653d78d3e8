//! `rulehaz`: rule-ensemble estimation of heterogeneous treatment effects
//! (HTEs) for right-censored survival data from two-arm studies.
//!
//! Subcommands: `fit` (train and persist a model), `predict` (per-subject
//! HTE table), `report` (rule and variable-importance tables), `simulate`
//! (synthetic trials and the benchmark harness), `truth` (oracle HTEs for a
//! covariate file). All commands are deterministic functions of their
//! inputs, flags, and seed, under any thread count.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 data error,
//! 4 numerical failure.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rulehaz::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rulehaz",
    version,
    about = "Rule-ensemble estimation of heterogeneous treatment effects \
             for right-censored survival data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from a survival CSV and write it as JSON
    Fit(FitArgs),
    /// Predict per-subject treatment effects with a fitted model
    Predict(PredictArgs),
    /// Emit rule and variable-importance tables for a fitted model
    Report(ReportArgs),
    /// Generate a synthetic trial dataset or run the benchmark harness
    Simulate(SimulateArgs),
    /// Write oracle treatment effects for a covariate file under a scenario
    Truth(TruthArgs),
}

/// Pipeline hyperparameters shared by `fit` and `simulate`.
#[derive(Args)]
struct HyperArgs {
    /// Boosting iterations (rule-generating trees)
    #[arg(long, default_value_t = 500)]
    trees: usize,

    /// Mean terminal-node count of the randomized tree sizes (>= 2; 2 gives
    /// stumps)
    #[arg(long, default_value_t = 2.0)]
    mean_depth: f64,

    /// Boosting learning rate, in (0, 1]
    #[arg(long, default_value_t = 0.01)]
    shrinkage: f64,

    /// Rows per boosting step: `default`, a fraction written with a decimal
    /// point (e.g. `0.5`), or an integer row count
    #[arg(long, default_value = "default")]
    subsample: String,

    /// Penalty strength: a number (0 allowed), or `max` for the null model;
    /// omit to select by cross-validation
    #[arg(long)]
    lambda: Option<String>,

    /// Cross-validation folds for selecting the penalty strength
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,

    /// Winsorizing quantile for linear terms, in [0, 0.5)
    #[arg(long, default_value_t = 0.025)]
    winsor_q: f64,
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with `time`, `event`, `treatment`, and covariate columns
    #[arg(long)]
    data: PathBuf,

    /// Output path for the fitted model JSON
    #[arg(long)]
    model: PathBuf,

    /// Directory for fit diagnostics (`fit_report.json`)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed for the rule-generating booster
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[command(flatten)]
    hyper: HyperArgs,

    /// Prediction horizon stored as the model default (otherwise the 90th
    /// percentile of the observed training times)
    #[arg(long)]
    t0: Option<f64>,

    /// Cap on worker threads (env `RULEHAZ_THREADS` as fallback)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Covariate CSV; columns must match the model's features by name
    /// (`time`/`event`/`treatment` columns are ignored if present)
    #[arg(long)]
    data: PathBuf,

    /// Fitted model JSON
    #[arg(long)]
    model: PathBuf,

    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Prediction horizon (the model's stored default when omitted)
    #[arg(long)]
    t0: Option<f64>,

    /// Cap on worker threads (env `RULEHAZ_THREADS` as fallback)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Dataset CSV used for supports and importances (typically the
    /// training data)
    #[arg(long)]
    data: PathBuf,

    /// Fitted model JSON
    #[arg(long)]
    model: PathBuf,

    /// Directory for `report.json`, `rules.csv`, `linear_terms.csv`, and
    /// `variable_importance.csv`; the plain-text report always goes to
    /// stdout
    #[arg(long)]
    out: Option<PathBuf>,

    /// Cap on worker threads (env `RULEHAZ_THREADS` as fallback)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario name like `M1xT1` (main effect M1–M3 x treatment effect
    /// T1–T3; T0 gives the zero-effect variant), or `all` for the canonical
    /// nine; benchmark mode accepts a comma-separated list
    #[arg(long)]
    scenario: String,

    /// Subjects per generated dataset (train and test size in benchmark
    /// mode)
    #[arg(long, default_value_t = 1000)]
    n: usize,

    /// Run the benchmark harness with this many replications per scenario
    /// instead of writing one dataset
    #[arg(long)]
    replications: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory (dataset mode: `dataset.csv` + `metadata.json`;
    /// benchmark mode: `benchmark_rows.csv` + `benchmark_summary.json`);
    /// primary CSV goes to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Evaluation horizon for benchmark metrics
    #[arg(long)]
    t0: Option<f64>,

    /// Monte-Carlo draws per subject for the benchmark's true-HTE oracle
    #[arg(long, default_value_t = 100_000)]
    oracle_draws: usize,

    #[command(flatten)]
    hyper: HyperArgs,

    /// Cap on worker threads (env `RULEHAZ_THREADS` as fallback)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TruthArgs {
    /// Scenario name like `M1xT1` (T0 gives the zero-effect variant)
    #[arg(long)]
    scenario: String,

    /// Covariate CSV with columns `x1`…`x15`
    /// (`time`/`event`/`treatment` columns are ignored if present)
    #[arg(long)]
    data: PathBuf,

    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Horizon the effect is evaluated at
    #[arg(long)]
    t0: Option<f64>,

    /// Seed for the Monte-Carlo oracle
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Monte-Carlo draws per subject
    #[arg(long, default_value_t = 100_000)]
    oracle_draws: usize,

    /// Cap on worker threads (env `RULEHAZ_THREADS` as fallback)
    #[arg(long)]
    threads: Option<usize>,
}

/// Caps the global worker pool from `--threads` or `RULEHAZ_THREADS`.
/// Results never depend on the cap; it only limits resource use.
fn init_threads(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("RULEHAZ_THREADS") {
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!(
                    "RULEHAZ_THREADS must be a positive integer, got `{raw}`"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("could not configure the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            init_threads(args.threads)?;
            commands::fit(&args)
        }
        Command::Predict(args) => {
            init_threads(args.threads)?;
            commands::predict(&args)
        }
        Command::Report(args) => {
            init_threads(args.threads)?;
            commands::report(&args)
        }
        Command::Simulate(args) => {
            init_threads(args.threads)?;
            commands::simulate(&args)
        }
        Command::Truth(args) => {
            init_threads(args.threads)?;
            commands::truth(&args)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Dimension(_) | Error::Csv(_) | Error::Io(_) | Error::Serde(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
