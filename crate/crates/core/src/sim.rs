//! Nine-scenario survival benchmark: data generator, Monte-Carlo true-HTE
//! oracle, evaluation metrics, and a replication harness.
//!
//! Subjects carry 15 covariates (odd 1-based indices standard normal, even
//! Bernoulli(0.5)) and a Bernoulli(0.5) treatment. True survival times come
//! from the hazard `2t·exp(μ(x) + (z − 0.5)τ(x))` by inverse transform;
//! censoring is log-normal-style, capped at 3.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig};
use crate::linear::quantile;
use crate::rng::{derive_seed, stream_rng, Domain};

/// Covariate count of every scenario.
pub const N_COVARIATES: usize = 15;
/// Evaluation horizon t₀ used by the benchmark.
pub const DEFAULT_HORIZON: f64 = 2.0;
/// Hard cap on censoring times (maximum follow-up).
pub const CENSORING_CAP: f64 = 3.0;
/// Monte-Carlo draws for the true-HTE oracle.
pub const DEFAULT_ORACLE_DRAWS: usize = 100_000;

/// Main-effect functional form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MainEffect {
    /// Linear: `0.5x₁ + 0.5x₃ + 0.5x₅ + 0.5x₂ + 0.5x₄ − x₆`.
    M1,
    /// Stepwise: `I(x₁>−1) − I(x₃>0) + I(x₅>1) + 0.5x₂x₄ − 1.25x₆`.
    M2,
    /// Nonlinear: `−1.25sin(x₁x₃) + 2.25/(1+e^{−x₅}) − 1.5x₂x₄x₆ − 1`.
    M3,
}

/// Treatment-effect functional form. `T0` (identically zero) sits outside
/// the canonical nine and exists for null-effect sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatEffect {
    /// No treatment effect: τ ≡ 0.
    T0,
    /// Linear: `−x₅ − 1.5|x₇+x₉| + 1.5x₆ − x₈ − x₁₀`.
    T1,
    /// Stepwise: `−2I(x₅>−1)I(x₇>0) − 2I(x₇>0)I(x₉>1) − 2.5x₆ − x₈ + 1.5x₁₀`.
    T2,
    /// Nonlinear: `−1.75sin(x₅x₇) + 3x₅/(1+e^{−x₆x₉}) − 2x₈x₉x₁₀ − 2`.
    T3,
}

impl fmt::Display for MainEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
        })
    }
}

impl fmt::Display for TreatEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::T0 => "T0",
            Self::T1 => "T1",
            Self::T2 => "T2",
            Self::T3 => "T3",
        })
    }
}

/// Main-effect value μ(x). `x` must have 15 entries.
pub fn mu(x: &[f64], which: MainEffect) -> f64 {
    assert_eq!(x.len(), N_COVARIATES, "scenario covariates must have 15 entries");
    // Formulas index covariates 1-based: x₁ = x[0], …
    let ind = |b: bool| f64::from(b);
    match which {
        MainEffect::M1 => 0.5 * x[0] + 0.5 * x[2] + 0.5 * x[4] + 0.5 * x[1] + 0.5 * x[3] - x[5],
        MainEffect::M2 => {
            ind(x[0] > -1.0) - ind(x[2] > 0.0) + ind(x[4] > 1.0) + 0.5 * x[1] * x[3]
                - 1.25 * x[5]
        }
        MainEffect::M3 => {
            -1.25 * (x[0] * x[2]).sin() + 2.25 / (1.0 + (-x[4]).exp())
                - 1.5 * x[1] * x[3] * x[5]
                - 1.0
        }
    }
}

/// Treatment-effect value τ(x). `x` must have 15 entries.
pub fn tau(x: &[f64], which: TreatEffect) -> f64 {
    assert_eq!(x.len(), N_COVARIATES, "scenario covariates must have 15 entries");
    let ind = |b: bool| f64::from(b);
    match which {
        TreatEffect::T0 => 0.0,
        TreatEffect::T1 => -x[4] - 1.5 * (x[6] + x[8]).abs() + 1.5 * x[5] - x[7] - x[9],
        TreatEffect::T2 => {
            -2.0 * ind(x[4] > -1.0) * ind(x[6] > 0.0)
                - 2.0 * ind(x[6] > 0.0) * ind(x[8] > 1.0)
                - 2.5 * x[5]
                - x[7]
                + 1.5 * x[9]
        }
        TreatEffect::T3 => {
            -1.75 * (x[4] * x[6]).sin() + 3.0 * (x[4] / (1.0 + (-(x[5] * x[8])).exp()))
                - 2.0 * x[7] * x[8] * x[9]
                - 2.0
        }
    }
}

/// One generating scenario: a main-effect and a treatment-effect form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub main: MainEffect,
    pub treat: TreatEffect,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.main, self.treat)
    }
}

/// Internal per-subject draw, kept separately from the assembled dataset so
/// tests can recompute `t = min(t*, c)` and `δ = I(t* < c)` row by row.
#[derive(Debug, Clone)]
pub(crate) struct SubjectDraw {
    pub(crate) x: Vec<f64>,
    pub(crate) z: u8,
    pub(crate) t_star: f64,
    pub(crate) censoring: f64,
}

impl Scenario {
    /// The canonical nine scenarios in row-major order (M1xT1 … M3xT3).
    pub fn all_nine() -> Vec<Scenario> {
        let mains = [MainEffect::M1, MainEffect::M2, MainEffect::M3];
        let treats = [TreatEffect::T1, TreatEffect::T2, TreatEffect::T3];
        mains
            .iter()
            .flat_map(|&m| treats.iter().map(move |&t| Scenario { main: m, treat: t }))
            .collect()
    }

    /// Parses names like `M2xT3` (case-insensitive; `T0` allowed for the
    /// null-effect variant). Unknown names list the canonical nine.
    pub fn parse(name: &str) -> Result<Scenario> {
        let canonical = name.trim().to_ascii_uppercase();
        let parts: Vec<&str> = canonical.split('X').collect();
        let scenario = if parts.len() == 2 {
            let main = match parts[0] {
                "M1" => Some(MainEffect::M1),
                "M2" => Some(MainEffect::M2),
                "M3" => Some(MainEffect::M3),
                _ => None,
            };
            let treat = match parts[1] {
                "T0" => Some(TreatEffect::T0),
                "T1" => Some(TreatEffect::T1),
                "T2" => Some(TreatEffect::T2),
                "T3" => Some(TreatEffect::T3),
                _ => None,
            };
            main.zip(treat).map(|(main, treat)| Scenario { main, treat })
        } else {
            None
        };
        scenario.ok_or_else(|| {
            let names: Vec<String> = Scenario::all_nine()
                .iter()
                .map(Scenario::to_string)
                .collect();
            Error::Config(format!(
                "unknown scenario `{name}`; valid scenarios: {}",
                names.join(", ")
            ))
        })
    }

    /// Log relative hazard `η(x, z) = μ(x) + (z − 0.5)·τ(x)`.
    pub fn eta(&self, x: &[f64], z: u8) -> f64 {
        mu(x, self.main) + (f64::from(z) - 0.5) * tau(x, self.treat)
    }

    /// Inverse-transform survival draw under baseline hazard `2t`:
    /// `t* = sqrt(−log(u)/exp(η(x,z)))`. Requires `u ∈ (0,1)`.
    pub fn sample_survival(&self, x: &[f64], z: u8, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Config(format!(
                "inverse-transform draw needs u in (0,1), got {u}"
            )));
        }
        Ok((-u.ln() / self.eta(x, z).exp()).sqrt())
    }

    fn draw_subject(&self, seed: u64, index: u64) -> SubjectDraw {
        let mut rng = stream_rng(seed, Domain::SimSubject, index);
        let mut x = vec![0.0; N_COVARIATES];
        for (j, v) in x.iter_mut().enumerate() {
            // 1-based odd indices (x₁, x₃, …) are 0-based even.
            *v = if j % 2 == 0 {
                StandardNormal.sample(&mut rng)
            } else {
                f64::from(rng.random::<bool>())
            };
        }
        let z = u8::from(rng.random::<bool>());
        let u = draw_open_unit(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let t_star = self
            .sample_survival(&x, z, u)
            .expect("draw_open_unit returns u in (0,1)");
        let censoring = censoring_from_noise(&x, z, eps);
        SubjectDraw {
            x,
            z,
            t_star,
            censoring,
        }
    }

    /// Generates `n` subjects with observed `t = min(t*, c)` and
    /// `δ = I(t* < c)`. Deterministic in `(self, n, seed)` under any thread
    /// count (one RNG stream per subject).
    pub fn generate(&self, n: usize, seed: u64) -> Result<SurvivalDataset> {
        if n == 0 {
            return Err(Error::Config("cannot generate an empty dataset".into()));
        }
        let draws: Vec<SubjectDraw> = (0..n)
            .into_par_iter()
            .map(|i| self.draw_subject(seed, i as u64))
            .collect();
        let mut covariates = Array2::<f64>::zeros((n, N_COVARIATES));
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut treatments = Vec::with_capacity(n);
        for (i, d) in draws.iter().enumerate() {
            for j in 0..N_COVARIATES {
                covariates[[i, j]] = d.x[j];
            }
            times.push(d.t_star.min(d.censoring));
            events.push(u8::from(d.t_star < d.censoring));
            treatments.push(d.z);
        }
        let names = (1..=N_COVARIATES).map(|j| format!("x{j}")).collect();
        SurvivalDataset::new(times, events, treatments, covariates, names)
    }

    #[cfg(test)]
    pub(crate) fn draws_for_test(&self, n: usize, seed: u64) -> Vec<SubjectDraw> {
        (0..n).map(|i| self.draw_subject(seed, i as u64)).collect()
    }

    /// Monte-Carlo true HTE with common random numbers: the same uniforms
    /// drive both arms, so τ ≡ 0 yields exactly 0. The tally is an integer
    /// sum, making the parallel reduction order-independent.
    pub fn true_hte(
        &self,
        x: &[f64],
        horizon: f64,
        n_draws: usize,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        if n_draws == 0 {
            return Err(Error::Config("oracle needs at least one draw".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "oracle horizon must be positive and finite, got {horizon}"
            )));
        }
        let us: Vec<f64> = (0..n_draws).map(|_| draw_open_unit(rng)).collect();
        let net: i64 = us
            .par_iter()
            .map(|&u| {
                let treated = self.sample_survival(x, 1, u).expect("u in (0,1)");
                let control = self.sample_survival(x, 0, u).expect("u in (0,1)");
                i64::from(treated > horizon) - i64::from(control > horizon)
            })
            .sum();
        Ok(net as f64 / n_draws as f64)
    }

    /// Oracle HTE for each row of a covariate matrix; row `i` uses its own
    /// seeded stream, so the batch is order-deterministic and parallel.
    pub fn true_hte_batch(
        &self,
        covariates: ArrayView2<'_, f64>,
        horizon: f64,
        n_draws: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if covariates.ncols() != N_COVARIATES {
            return Err(Error::Dimension(format!(
                "oracle covariates need {N_COVARIATES} columns, got {}",
                covariates.ncols()
            )));
        }
        (0..covariates.nrows())
            .into_par_iter()
            .map(|i| {
                let x: Vec<f64> = covariates.row(i).to_vec();
                let mut rng = stream_rng(seed, Domain::OracleSubject, i as u64);
                self.true_hte(&x, horizon, n_draws, &mut rng)
            })
            .collect()
    }

    /// Closed-form HTE of the generating model:
    /// `exp(−t₀²e^{μ+0.5τ}) − exp(−t₀²e^{μ−0.5τ})`.
    pub fn analytic_hte(&self, x: &[f64], horizon: f64) -> f64 {
        let m = mu(x, self.main);
        let t = tau(x, self.treat);
        let h2 = horizon * horizon;
        (-h2 * (m + 0.5 * t).exp()).exp() - (-h2 * (m - 0.5 * t).exp()).exp()
    }
}

/// Uniform draw guaranteed inside the open interval (0,1).
fn draw_open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v; // random::<f64>() lies in [0,1), so v < 1 already
        }
    }
}

/// Censoring time `c = min(1.1·exp(1 − sin(x₁x₃) + 3(z − 0.5)x₈ + ε), 3)`
/// with the noise value supplied explicitly.
fn censoring_from_noise(x: &[f64], z: u8, eps: f64) -> f64 {
    let raw = 1.1 * (1.0 - (x[0] * x[2]).sin() + 3.0 * (f64::from(z) - 0.5) * x[7] + eps).exp();
    raw.min(CENSORING_CAP)
}

/// Censoring draw with ε ~ N(0,1) from the given RNG.
pub fn sample_censoring(x: &[f64], z: u8, rng: &mut impl Rng) -> f64 {
    assert_eq!(x.len(), N_COVARIATES, "scenario covariates must have 15 entries");
    let eps: f64 = StandardNormal.sample(rng);
    censoring_from_noise(x, z, eps)
}

/// Evaluation metrics for one replication. RMSE and AbsRbias weight by the
/// event indicator and are missing when no subject has an event; AbsRbias
/// additionally excludes zero-truth rows (count reported). Spearman and
/// correct classification use every subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rmse: Option<f64>,
    pub abs_rbias: Option<f64>,
    /// Event rows excluded from AbsRbias because the true HTE is exactly 0.
    pub n_zero_true_excluded: usize,
    /// Missing when either vector is constant in ranks.
    pub spearman: Option<f64>,
    pub correct_classification: f64,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Ranks with ties sharing their average position (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos + 1;
        while end < n && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        // Positions pos+1 ..= end (1-based) share their mean rank.
        let mean_rank = (pos + 1 + end) as f64 / 2.0;
        for &i in &order[pos..end] {
            ranks[i] = mean_rank;
        }
        pos = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    // `(saa * sbb).sqrt()` (rather than the product of square roots) returns
    // the exact common sum when the two vectors are identical, so perfectly
    // concordant ranks yield exactly ±1.0.
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties; missing when
/// either vector is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Computes all four metrics; see [`MetricsRow`] for the weighting rules.
pub fn metrics(true_hte: &[f64], estimated: &[f64], events: &[u8]) -> Result<MetricsRow> {
    let n = true_hte.len();
    if estimated.len() != n || events.len() != n {
        return Err(Error::Dimension(format!(
            "metric vectors differ in length: {n}/{}/{}",
            estimated.len(),
            events.len()
        )));
    }
    if n == 0 {
        return Err(Error::Data("metrics need at least one subject".into()));
    }
    if true_hte
        .iter()
        .chain(estimated)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numerical(
            "metric inputs contain NaN or infinity".into(),
        ));
    }

    let n_events = events.iter().filter(|&&e| e == 1).count();
    let rmse = (n_events > 0).then(|| {
        let ss: f64 = (0..n)
            .filter(|&i| events[i] == 1)
            .map(|i| (true_hte[i] - estimated[i]).powi(2))
            .sum();
        (ss / n_events as f64).sqrt()
    });

    let mut rbias_sum = 0.0;
    let mut rbias_n = 0usize;
    let mut n_zero_true_excluded = 0usize;
    for i in 0..n {
        if events[i] != 1 {
            continue;
        }
        if true_hte[i] == 0.0 {
            n_zero_true_excluded += 1;
        } else {
            rbias_sum += (true_hte[i] - estimated[i]) / true_hte[i];
            rbias_n += 1;
        }
    }
    let abs_rbias = (rbias_n > 0).then(|| (rbias_sum / rbias_n as f64).abs());

    let correct = (0..n)
        .filter(|&i| sign(true_hte[i]) == sign(estimated[i]))
        .count() as f64
        / n as f64;

    Ok(MetricsRow {
        rmse,
        abs_rbias,
        n_zero_true_excluded,
        spearman: spearman(true_hte, estimated),
        correct_classification: correct,
    })
}

/// Benchmark harness settings.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<Scenario>,
    /// Train and test size per replication.
    pub n: usize,
    pub replications: usize,
    /// Pipeline settings; the boosting seed is re-derived per replication.
    pub fit: FitConfig,
    pub seed: u64,
    pub horizon: f64,
    pub oracle_draws: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::all_nine(),
            n: 1000,
            replications: 10,
            fit: FitConfig::default(),
            seed: 0,
            horizon: DEFAULT_HORIZON,
            oracle_draws: DEFAULT_ORACLE_DRAWS,
        }
    }
}

/// One scenario × replication result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub replication: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub censoring_rate_train: f64,
    pub censoring_rate_test: f64,
    #[serde(flatten)]
    pub metrics: MetricsRow,
}

/// Five-number summary of one metric over successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Replications contributing a value.
    pub n: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

/// Boxplot-ready per-scenario aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub replications: usize,
    pub failures: usize,
    pub rmse: MetricSummary,
    pub abs_rbias: MetricSummary,
    pub spearman: MetricSummary,
    pub correct_classification: MetricSummary,
}

/// Full benchmark output: per-replication rows (scenario-major order),
/// failure messages, and per-scenario summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResults {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<String>,
    pub summaries: Vec<ScenarioSummary>,
}

fn censoring_rate(data: &SurvivalDataset) -> f64 {
    1.0 - data.n_events() as f64 / data.n_rows() as f64
}

fn run_one(
    scenario: Scenario,
    replication: usize,
    global_index: u64,
    config: &BenchmarkConfig,
) -> Result<BenchRow> {
    let train_seed = derive_seed(config.seed, Domain::BenchReplication, global_index * 4);
    let test_seed = derive_seed(config.seed, Domain::BenchReplication, global_index * 4 + 1);
    let fit_seed = derive_seed(config.seed, Domain::BenchReplication, global_index * 4 + 2);
    let truth_seed = derive_seed(config.seed, Domain::BenchReplication, global_index * 4 + 3);

    let train = scenario.generate(config.n, train_seed)?;
    let test = scenario.generate(config.n, test_seed)?;
    let mut fit_config = config.fit.clone();
    fit_config.boost.seed = fit_seed;
    let model = fit(&train, &fit_config)?;
    let predictions = model.predict_batch(test.covariates().view(), Some(config.horizon))?;
    let estimated: Vec<f64> = predictions.iter().map(|p| p.hte).collect();
    let truth = scenario.true_hte_batch(
        test.covariates().view(),
        config.horizon,
        config.oracle_draws,
        truth_seed,
    )?;
    let metrics = metrics(&truth, &estimated, test.events())?;
    Ok(BenchRow {
        scenario: scenario.to_string(),
        replication,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        censoring_rate_train: censoring_rate(&train),
        censoring_rate_test: censoring_rate(&test),
        metrics,
    })
}

/// Runs every scenario × replication (parallel, independent seed streams).
/// Individual replication failures are logged and collected; the harness
/// continues. Deterministic in the config under any thread count.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResults> {
    if config.scenarios.is_empty() {
        return Err(Error::Config("benchmark needs at least one scenario".into()));
    }
    if config.n == 0 {
        return Err(Error::Config("benchmark datasets cannot be empty".into()));
    }
    if !(config.horizon > 0.0) || !config.horizon.is_finite() {
        return Err(Error::Config(format!(
            "benchmark horizon must be positive and finite, got {}",
            config.horizon
        )));
    }
    if config.oracle_draws == 0 {
        return Err(Error::Config("oracle needs at least one draw".into()));
    }
    config.fit.validate()?;

    let jobs: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| (0..config.replications).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<BenchRow>)> = jobs
        .into_par_iter()
        .map(|(s, r)| {
            let scenario = config.scenarios[s];
            let global_index = (s * config.replications + r) as u64;
            (s, r, run_one(scenario, r, global_index, config))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (s, r, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(err) => {
                let msg = format!(
                    "{} replication {r} failed: {err}",
                    config.scenarios[s]
                );
                log::warn!("{msg}");
                failures.push(msg);
            }
        }
    }
    let summaries = summarize(&config.scenarios, config.replications, &rows);
    Ok(BenchmarkResults {
        rows,
        failures,
        summaries,
    })
}

fn five_number(mut values: Vec<f64>) -> MetricSummary {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return MetricSummary {
            n: 0,
            min: None,
            q1: None,
            median: None,
            q3: None,
            max: None,
        };
    }
    MetricSummary {
        n,
        min: Some(values[0]),
        q1: Some(quantile(&values, 0.25)),
        median: Some(quantile(&values, 0.5)),
        q3: Some(quantile(&values, 0.75)),
        max: Some(values[n - 1]),
    }
}

/// Per-scenario five-number summaries over the successful rows.
pub fn summarize(
    scenarios: &[Scenario],
    replications: usize,
    rows: &[BenchRow],
) -> Vec<ScenarioSummary> {
    scenarios
        .iter()
        .map(|scenario| {
            let name = scenario.to_string();
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.scenario == name).collect();
            let collect = |f: &dyn Fn(&BenchRow) -> Option<f64>| -> Vec<f64> {
                mine.iter().filter_map(|r| f(r)).collect()
            };
            ScenarioSummary {
                scenario: name,
                replications,
                failures: replications - mine.len(),
                rmse: five_number(collect(&|r| r.metrics.rmse)),
                abs_rbias: five_number(collect(&|r| r.metrics.abs_rbias)),
                spearman: five_number(collect(&|r| r.metrics.spearman)),
                correct_classification: five_number(collect(&|r| {
                    Some(r.metrics.correct_classification)
                })),
            }
        })
        .collect()
}

/// CSV column order for benchmark rows.
pub const BENCH_CSV_HEADER: [&str; 11] = [
    "scenario",
    "replication",
    "n_train",
    "n_test",
    "censoring_rate_train",
    "censoring_rate_test",
    "rmse",
    "abs_rbias",
    "n_zero_true_excluded",
    "spearman",
    "correct_classification",
];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders rows as CSV with full-precision numbers; missing metrics are
/// empty fields. Zero rows still produce the header line.
pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(BENCH_CSV_HEADER)?;
    for row in rows {
        writer.write_record(&[
            row.scenario.clone(),
            row.replication.to_string(),
            row.n_train.to_string(),
            row.n_test.to_string(),
            row.censoring_rate_train.to_string(),
            row.censoring_rate_test.to_string(),
            opt_field(row.metrics.rmse),
            opt_field(row.metrics.abs_rbias),
            row.metrics.n_zero_true_excluded.to_string(),
            opt_field(row.metrics.spearman),
            opt_field(row.metrics.correct_classification.into()),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("could not flush CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV is not UTF-8: {e}")))
}
