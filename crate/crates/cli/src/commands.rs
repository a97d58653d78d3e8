//! Subcommand implementations: orchestration and CSV/JSON plumbing around
//! the library pipeline. Numeric CSV output keeps full precision (shortest
//! round-trip decimal); display rounding happens only in text tables.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::Array2;
use rulehaz::boost::{BoostConfig, Subsample};
use rulehaz::fit::{FitConfig, LambdaChoice};
use rulehaz::interpret::build_report;
use rulehaz::model::HteModel;
use rulehaz::sim::{
    rows_to_csv, run_benchmark, BenchmarkConfig, Scenario, DEFAULT_HORIZON, N_COVARIATES,
};
use rulehaz::solver::PathConfig;
use rulehaz::{Error, Result, SurvivalDataset};

use crate::{FitArgs, HyperArgs, PredictArgs, ReportArgs, SimulateArgs, TruthArgs};

/// `default`, a fraction written with a decimal point, or an integer count.
fn parse_subsample(raw: &str) -> Result<Subsample> {
    let trimmed = raw.trim();
    if trimmed.eq_ignore_ascii_case("default") {
        return Ok(Subsample::Default);
    }
    if trimmed.contains('.') {
        return trimmed
            .parse::<f64>()
            .map(Subsample::Fraction)
            .map_err(|_| bad_subsample(raw));
    }
    trimmed
        .parse::<usize>()
        .map(Subsample::Count)
        .map_err(|_| bad_subsample(raw))
}

fn bad_subsample(raw: &str) -> Error {
    Error::Config(format!(
        "--subsample must be `default`, a fraction with a decimal point, \
         or an integer row count, got `{raw}`"
    ))
}

/// A number (0 gives the unpenalized fit) or `max` (null model).
fn parse_lambda(raw: &str) -> Result<LambdaChoice> {
    let trimmed = raw.trim();
    if trimmed.eq_ignore_ascii_case("max") {
        return Ok(LambdaChoice::Max);
    }
    trimmed.parse::<f64>().map(LambdaChoice::Fixed).map_err(|_| {
        Error::Config(format!("--lambda must be a number or `max`, got `{raw}`"))
    })
}

fn fit_config(hyper: &HyperArgs, seed: u64, horizon: Option<f64>) -> Result<FitConfig> {
    let lambda = match &hyper.lambda {
        Some(raw) => parse_lambda(raw)?,
        None => LambdaChoice::CrossValidated,
    };
    Ok(FitConfig {
        boost: BoostConfig {
            num_trees: hyper.trees,
            mean_depth: hyper.mean_depth,
            shrinkage: hyper.shrinkage,
            subsample: parse_subsample(&hyper.subsample)?,
            seed,
        },
        winsor_q: hyper.winsor_q,
        path: PathConfig::default(),
        cv_folds: hyper.cv_folds,
        use_one_se: false,
        lambda,
        horizon,
    })
}

/// Reads a covariate CSV whose columns are matched to `required` by name,
/// in any order. `time`, `event`, and `treatment` columns are ignored so a
/// training file works unchanged; any other unknown column is an error, as
/// is any missing one.
fn read_covariates(path: &Path, required: &[String]) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let reserved = ["time", "event", "treatment"];

    let missing: Vec<&str> = required
        .iter()
        .filter(|name| !headers.iter().any(|h| h == *name))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = headers
        .iter()
        .filter(|h| !required.contains(h) && !reserved.contains(&h.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Data(format!(
            "covariate columns do not match the model: missing [{}], unexpected [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let columns: Vec<usize> = required
        .iter()
        .map(|name| headers.iter().position(|h| h == name).expect("checked above"))
        .collect();
    let mut values: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        for &col in &columns {
            let raw = record.get(col).unwrap_or("").trim();
            let value: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "cannot parse `{raw}` in column `{}` at row {row_idx}",
                    headers[col]
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "covariate `{}` at row {row_idx} is not finite ({value})",
                    headers[col]
                )));
            }
            values.push(value);
        }
        n_rows += 1;
    }
    Array2::from_shape_vec((n_rows, required.len()), values)
        .map_err(|e| Error::Dimension(e.to_string()))
}

/// Writes `content` to the file, or to stdout when no path is given.
fn emit(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, content)?;
            info!("wrote {}", path.display());
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn write_in_dir(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn csv_into_string(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("could not flush CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV is not UTF-8: {e}")))
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let data = SurvivalDataset::from_csv_path(&args.data)?;
    info!(
        "loaded {} rows, {} covariates, {} events",
        data.n_rows(),
        data.n_features(),
        data.n_events()
    );
    let config = fit_config(&args.hyper, args.seed, args.t0)?;
    let model = rulehaz::fit(&data, &config)?;

    if let Some(parent) = args.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    model.save(&args.model)?;

    if let Some(dir) = &args.out {
        let report_json = serde_json::to_string_pretty(&model.fit_report)?;
        write_in_dir(dir, "fit_report.json", &format!("{report_json}\n"))?;
    }

    let report = &model.fit_report;
    println!(
        "fitted on {} rows ({} events): {} main rules, {} treatment-rule pairs, \
         {} linear pairs, {} design columns",
        report.n_rows,
        report.n_events,
        report.n_main_rules,
        report.n_treat_rules,
        report.n_linear_terms,
        report.n_design_columns
    );
    println!(
        "lambda = {} ({:?}), {} active groups, converged: {}",
        model.lambda, report.lambda_selection, report.n_active_groups, report.converged
    );
    println!("model written to {}", args.model.display());
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = HteModel::load(&args.model)?;
    let covariates = read_covariates(&args.data, &model.feature_names)?;
    let predictions = model.predict_batch(covariates.view(), args.t0)?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "no".to_string(),
        "hte".to_string(),
        "survival_treated".to_string(),
        "survival_control".to_string(),
    ];
    header.extend(model.feature_names.iter().cloned());
    writer.write_record(&header)?;
    for (i, p) in predictions.iter().enumerate() {
        let mut record = vec![
            (i + 1).to_string(),
            p.hte.to_string(),
            p.survival_treated.to_string(),
            p.survival_control.to_string(),
        ];
        record.extend(covariates.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    emit(args.out.as_ref(), &csv_into_string(writer)?)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let model = HteModel::load(&args.model)?;
    let data = SurvivalDataset::from_csv_path(&args.data)?;
    let report = build_report(&model, &data)?;

    print!("{}", report.to_text());

    if let Some(dir) = &args.out {
        let json = serde_json::to_string_pretty(&report)?;
        write_in_dir(dir, "report.json", &format!("{json}\n"))?;

        let mut rules = csv::Writer::from_writer(Vec::new());
        rules.write_record(["rule_index", "condition", "importance", "hazard_ratio", "support"])?;
        for r in &report.rules {
            rules.write_record(&[
                r.rule_index.to_string(),
                r.condition.clone(),
                r.importance.to_string(),
                r.hazard_ratio.to_string(),
                r.support.to_string(),
            ])?;
        }
        write_in_dir(dir, "rules.csv", &csv_into_string(rules)?)?;

        let mut linear = csv::Writer::from_writer(Vec::new());
        linear.write_record(["feature", "name", "importance"])?;
        for r in &report.linear_terms {
            linear.write_record(&[r.feature.to_string(), r.name.clone(), r.importance.to_string()])?;
        }
        write_in_dir(dir, "linear_terms.csv", &csv_into_string(linear)?)?;

        let mut variables = csv::Writer::from_writer(Vec::new());
        variables.write_record(["feature", "name", "importance"])?;
        for r in &report.variable_importance {
            variables.write_record(&[
                r.feature.to_string(),
                r.name.clone(),
                r.importance.to_string(),
            ])?;
        }
        write_in_dir(dir, "variable_importance.csv", &csv_into_string(variables)?)?;
    }
    Ok(())
}

fn parse_scenarios(raw: &str) -> Result<Vec<Scenario>> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(Scenario::all_nine());
    }
    raw.split(',').map(Scenario::parse).collect()
}

fn dataset_csv(data: &SurvivalDataset) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string(), "event".to_string(), "treatment".to_string()];
    header.extend(data.feature_names().iter().cloned());
    writer.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut record = vec![
            data.times()[i].to_string(),
            data.events()[i].to_string(),
            data.treatments()[i].to_string(),
        ];
        record.extend(data.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    csv_into_string(writer)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let scenarios = parse_scenarios(&args.scenario)?;

    match args.replications {
        None => {
            // Dataset mode: one scenario, one CSV (plus metadata with --out).
            if scenarios.len() != 1 {
                return Err(Error::Config(format!(
                    "dataset generation needs exactly one scenario, got {}",
                    scenarios.len()
                )));
            }
            let scenario = scenarios[0];
            let data = scenario.generate(args.n, args.seed)?;
            let csv = dataset_csv(&data)?;
            let metadata = serde_json::json!({
                "scenario": scenario.to_string(),
                "n": data.n_rows(),
                "seed": args.seed,
                "n_covariates": data.n_features(),
                "n_events": data.n_events(),
                "censoring_fraction":
                    1.0 - data.n_events() as f64 / data.n_rows() as f64,
            });
            match &args.out {
                Some(dir) => {
                    write_in_dir(dir, "dataset.csv", &csv)?;
                    let meta = serde_json::to_string_pretty(&metadata)?;
                    write_in_dir(dir, "metadata.json", &format!("{meta}\n"))?;
                }
                None => emit(None, &csv)?,
            }
            Ok(())
        }
        Some(replications) => {
            // Benchmark mode: scenario x replication grid through the full
            // pipeline, with per-replication metrics against the oracle.
            let config = BenchmarkConfig {
                scenarios,
                n: args.n,
                replications,
                fit: fit_config(&args.hyper, args.seed, None)?,
                seed: args.seed,
                horizon: args.t0.unwrap_or(DEFAULT_HORIZON),
                oracle_draws: args.oracle_draws,
            };
            let results = run_benchmark(&config)?;
            for failure in &results.failures {
                eprintln!("replication failed: {failure}");
            }
            let rows_csv = rows_to_csv(&results.rows)?;
            let summary = serde_json::json!({
                "summaries": results.summaries,
                "failures": results.failures,
            });
            match &args.out {
                Some(dir) => {
                    write_in_dir(dir, "benchmark_rows.csv", &rows_csv)?;
                    let json = serde_json::to_string_pretty(&summary)?;
                    write_in_dir(dir, "benchmark_summary.json", &format!("{json}\n"))?;
                }
                None => emit(None, &rows_csv)?,
            }
            Ok(())
        }
    }
}

pub fn truth(args: &TruthArgs) -> Result<()> {
    let scenarios = parse_scenarios(&args.scenario)?;
    if scenarios.len() != 1 {
        return Err(Error::Config(format!(
            "truth needs exactly one scenario, got {}",
            scenarios.len()
        )));
    }
    let scenario = scenarios[0];
    let names: Vec<String> = (1..=N_COVARIATES).map(|j| format!("x{j}")).collect();
    let covariates = read_covariates(&args.data, &names)?;
    let horizon = args.t0.unwrap_or(DEFAULT_HORIZON);
    let hte =
        scenario.true_hte_batch(covariates.view(), horizon, args.oracle_draws, args.seed)?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["no", "hte"])?;
    for (i, value) in hte.iter().enumerate() {
        writer.write_record(&[(i + 1).to_string(), value.to_string()])?;
    }
    emit(args.out.as_ref(), &csv_into_string(writer)?)
}
