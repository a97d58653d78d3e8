//! End-to-end pipeline: boosted rule generation → rule partition → basis
//! assembly → cross-validated group-lasso Cox fit → baseline hazard →
//! packaged [`HteModel`].

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::baseline::BaselineHazard;
use crate::basis::BasisSet;
use crate::boost::{boost, BoostConfig};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linear::quantile;
use crate::model::{Coefficients, CvSummary, FitReport, HteModel, LambdaSelection, SCHEMA_VERSION};
use crate::partition::partition;
use crate::solver::{cross_validate, lambda_max, solve_path, PathConfig};

/// How the penalty strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// K-fold cross-validation over the automatic grid (or the grid given in
    /// the path config).
    CrossValidated,
    /// A fixed value; 0 gives the unpenalized fit.
    Fixed(f64),
    /// λ_max: the null model with every penalized group zero.
    Max,
}

/// Full pipeline configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub boost: BoostConfig,
    /// Winsorizing quantile for linear terms, in [0, 0.5).
    pub winsor_q: f64,
    pub path: PathConfig,
    pub cv_folds: usize,
    /// Select the largest λ within one SE of the CV minimum instead of the
    /// minimizer.
    pub use_one_se: bool,
    pub lambda: LambdaChoice,
    /// Prediction horizon stored in the model; defaults to the 90th
    /// percentile of the observed times.
    pub horizon: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            boost: BoostConfig::default(),
            winsor_q: 0.025,
            path: PathConfig::default(),
            cv_folds: 5,
            use_one_se: false,
            lambda: LambdaChoice::CrossValidated,
            horizon: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.boost.validate()?;
        self.path.validate()?;
        if !(0.0..0.5).contains(&self.winsor_q) {
            return Err(Error::Config(format!(
                "winsorizing quantile must lie in [0, 0.5), got {}",
                self.winsor_q
            )));
        }
        if matches!(self.lambda, LambdaChoice::CrossValidated) && self.cv_folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.cv_folds
            )));
        }
        if let LambdaChoice::Fixed(v) = self.lambda {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "fixed λ must be nonnegative and finite, got {v}"
                )));
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Config(format!(
                    "horizon must be positive and finite, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Fits the full model. Deterministic in `(data, config)`; refuses datasets
/// where either treatment arm has no observed events, since arm-specific
/// hazards would be unidentified.
pub fn fit(data: &SurvivalDataset, config: &FitConfig) -> Result<HteModel> {
    config.validate()?;
    for arm in [0u8, 1u8] {
        if data.n_events_in_arm(arm) == 0 {
            return Err(Error::Data(format!(
                "treatment arm {arm} has no observed events; arm-specific hazards \
                 cannot be estimated from this data"
            )));
        }
    }

    let candidates = boost(data, &config.boost)?;
    let partitioned = partition(&candidates);
    let basis = BasisSet::assemble(data, &partitioned, config.winsor_q)?;
    if basis.is_empty() {
        return Err(Error::Data(
            "no usable terms: every candidate rule was degenerate and every \
             covariate is constant after winsorizing"
                .into(),
        ));
    }
    let layout = basis.layout();
    let design = basis.build_design(data)?;
    let groups = layout.groups();
    let times = data.times();
    let events = data.events();
    let seed = config.boost.seed;

    let (solution, lambda, selection, cv_summary, converged, n_active) = match config.lambda {
        LambdaChoice::CrossValidated => {
            let path = solve_path(design.view(), &groups, times, events, &config.path)?;
            let cv = cross_validate(
                design.view(),
                times,
                events,
                &groups,
                &path.lambdas,
                config.cv_folds,
                seed,
                &config.path,
            )?;
            let idx = if config.use_one_se {
                cv.one_se_index
            } else {
                cv.selected_index
            };
            let summary = CvSummary {
                lambdas: cv.lambdas.clone(),
                mean_deviance: cv.mean_deviance.clone(),
                se_deviance: cv.se_deviance.clone(),
                selected_index: cv.selected_index,
                one_se_index: cv.one_se_index,
                folds: config.cv_folds,
            };
            let selection = if config.use_one_se {
                LambdaSelection::CvOneSe
            } else {
                LambdaSelection::CvMin
            };
            (
                path.coefficients[idx].clone(),
                path.lambdas[idx],
                selection,
                Some(summary),
                path.converged[idx],
                path.n_active_groups[idx],
            )
        }
        LambdaChoice::Fixed(v) => {
            let cfg = PathConfig {
                explicit_lambdas: Some(vec![v]),
                ..config.path.clone()
            };
            let path = solve_path(design.view(), &groups, times, events, &cfg)?;
            (
                path.coefficients[0].clone(),
                v,
                LambdaSelection::Fixed,
                None,
                path.converged[0],
                path.n_active_groups[0],
            )
        }
        LambdaChoice::Max => {
            // Nudged above λ_max so the all-zero solution survives floating-
            // point rounding in the proximal threshold.
            let top = lambda_max(design.view(), &groups, times, events)? * (1.0 + 1e-10);
            let cfg = PathConfig {
                explicit_lambdas: Some(vec![top]),
                ..config.path.clone()
            };
            let path = solve_path(design.view(), &groups, times, events, &cfg)?;
            (
                path.coefficients[0].clone(),
                top,
                LambdaSelection::Max,
                None,
                path.converged[0],
                path.n_active_groups[0],
            )
        }
    };

    let theta = ArrayView1::from(&solution[..]);
    let eta: Vec<f64> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| design.row(i).dot(&theta))
        .collect();
    let baseline = BaselineHazard::estimate(times, events, &eta)?;

    let default_horizon = match config.horizon {
        Some(t) => t,
        None => {
            let mut sorted = times.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            quantile(&sorted, 0.9)
        }
    };

    let coefficients = Coefficients::from_solution(&basis, data.n_features(), &solution)?;
    let fit_report = FitReport {
        n_rows: data.n_rows(),
        n_events: data.n_events(),
        n_candidate_rules: candidates.rules.len(),
        n_main_raw: partitioned.n_main_raw,
        n_treat_raw: partitioned.n_treat_raw,
        n_main_rules: basis.main_rules.len(),
        n_treat_rules: basis.treat_rules.len(),
        n_linear_terms: basis.linear_terms.len(),
        n_design_columns: layout.n_columns(),
        lambda_selection: selection,
        cv: cv_summary,
        n_active_groups: n_active,
        converged,
        seed,
    };

    let model = HteModel {
        schema_version: SCHEMA_VERSION,
        feature_names: data.feature_names().to_vec(),
        feature_kinds: data.feature_kinds().to_vec(),
        basis,
        coefficients,
        baseline,
        lambda,
        default_horizon,
        fit_report,
    };
    model.validate()?;
    Ok(model)
}
