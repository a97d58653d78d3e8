//! The fitted model: basis, coefficient blocks, baseline hazard, and
//! per-subject HTE prediction, with versioned JSON persistence.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineHazard;
use crate::basis::BasisSet;
use crate::data::FeatureKind;
use crate::error::{Error, Result};

/// Version tag written into every model file; loading rejects mismatches.
pub const SCHEMA_VERSION: u32 = 1;

/// Coefficient blocks of the fitted model. Rule blocks are indexed like the
/// basis rule lists; linear blocks have one entry per covariate, zero for
/// covariates whose winsorized column was constant (no term exists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// Main-effect rule coefficients θ_k.
    pub main_rule: Vec<f64>,
    /// Main-effect linear coefficients, indexed by covariate.
    pub main_linear: Vec<f64>,
    /// Treated-arm coefficients α_k of the treatment-rule pairs.
    pub treat_rule_treated: Vec<f64>,
    /// Control-arm coefficients β_k of the treatment-rule pairs.
    pub treat_rule_control: Vec<f64>,
    /// Treated-arm linear-pair coefficients, indexed by covariate.
    pub treat_linear_treated: Vec<f64>,
    /// Control-arm linear-pair coefficients, indexed by covariate.
    pub treat_linear_control: Vec<f64>,
}

impl Coefficients {
    /// Splits one dense solver solution (block layout
    /// `[main rules | main linear | treat-rule pairs | linear pairs]`)
    /// into named blocks.
    pub fn from_solution(basis: &BasisSet, n_features: usize, solution: &[f64]) -> Result<Self> {
        let layout = basis.layout();
        if solution.len() != layout.n_columns() {
            return Err(Error::Dimension(format!(
                "solution has {} entries but the basis layout has {} columns",
                solution.len(),
                layout.n_columns()
            )));
        }
        let mut out = Self {
            main_rule: solution[..layout.n_main_rules].to_vec(),
            main_linear: vec![0.0; n_features],
            treat_rule_treated: vec![0.0; layout.n_treat_rules],
            treat_rule_control: vec![0.0; layout.n_treat_rules],
            treat_linear_treated: vec![0.0; n_features],
            treat_linear_control: vec![0.0; n_features],
        };
        for (idx, term) in basis.linear_terms.iter().enumerate() {
            out.main_linear[term.feature] = solution[layout.main_linear_start() + idx];
        }
        for k in 0..layout.n_treat_rules {
            out.treat_rule_treated[k] = solution[layout.treat_pairs_start() + 2 * k];
            out.treat_rule_control[k] = solution[layout.treat_pairs_start() + 2 * k + 1];
        }
        for (idx, term) in basis.linear_terms.iter().enumerate() {
            out.treat_linear_treated[term.feature] = solution[layout.linear_pairs_start() + 2 * idx];
            out.treat_linear_control[term.feature] =
                solution[layout.linear_pairs_start() + 2 * idx + 1];
        }
        Ok(out)
    }
}

/// How the final penalty strength was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Minimizer of the cross-validated deviance.
    CvMin,
    /// Largest λ within one standard error of the CV minimum.
    CvOneSe,
    /// User-supplied value.
    Fixed,
    /// Forced to λ_max (null model: every penalized group zero).
    Max,
}

/// Cross-validation curve retained for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub lambdas: Vec<f64>,
    pub mean_deviance: Vec<f64>,
    pub se_deviance: Vec<f64>,
    pub selected_index: usize,
    pub one_se_index: usize,
    pub folds: usize,
}

/// Deterministic fit diagnostics persisted with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_rows: usize,
    pub n_events: usize,
    /// Rules harvested from boosting before partition/filtering.
    pub n_candidate_rules: usize,
    /// Partition outputs before deduplication and support filtering.
    pub n_main_raw: usize,
    pub n_treat_raw: usize,
    /// Basis contents after filtering.
    pub n_main_rules: usize,
    pub n_treat_rules: usize,
    pub n_linear_terms: usize,
    pub n_design_columns: usize,
    pub lambda_selection: LambdaSelection,
    pub cv: Option<CvSummary>,
    pub n_active_groups: usize,
    /// Whether the solver converged at the selected λ.
    pub converged: bool,
    pub seed: u64,
}

/// One subject's predicted arm survivals and their difference at a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtePrediction {
    pub survival_treated: f64,
    pub survival_control: f64,
    /// `Δ̂(t₀|x) = S₁(t₀|x) − S₀(t₀|x)`.
    pub hte: f64,
    pub horizon: f64,
    /// True when the horizon lies beyond the training data's last observed
    /// time, so the cumulative hazard was capped at its final value.
    pub extrapolated: bool,
}

/// A fitted rule-ensemble HTE model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HteModel {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub basis: BasisSet,
    pub coefficients: Coefficients,
    pub baseline: BaselineHazard,
    /// Penalty strength of the persisted coefficients.
    pub lambda: f64,
    /// Horizon used when a prediction call does not specify one
    /// (90th percentile of the training observed times).
    pub default_horizon: f64,
    pub fit_report: FitReport,
}

impl HteModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Structural consistency checks applied after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "model schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = self.n_features();
        if self.feature_kinds.len() != p {
            return Err(Error::Dimension(format!(
                "{} feature kinds for {p} feature names",
                self.feature_kinds.len()
            )));
        }
        let c = &self.coefficients;
        if c.main_rule.len() != self.basis.main_rules.len()
            || c.treat_rule_treated.len() != self.basis.treat_rules.len()
            || c.treat_rule_control.len() != self.basis.treat_rules.len()
        {
            return Err(Error::Dimension(
                "rule coefficient blocks do not match the basis rule counts".into(),
            ));
        }
        if [
            c.main_linear.len(),
            c.treat_linear_treated.len(),
            c.treat_linear_control.len(),
        ]
        .iter()
        .any(|&len| len != p)
        {
            return Err(Error::Dimension(
                "linear coefficient blocks do not match the covariate count".into(),
            ));
        }
        let max_rule_feature = self
            .basis
            .main_rules
            .iter()
            .chain(&self.basis.treat_rules)
            .filter_map(crate::rule::Rule::max_feature)
            .max();
        if max_rule_feature.is_some_and(|m| m >= p)
            || self.basis.linear_terms.iter().any(|t| t.feature >= p)
        {
            return Err(Error::Dimension(
                "basis references a covariate beyond the model's feature list".into(),
            ));
        }
        if !(self.default_horizon > 0.0) || !self.default_horizon.is_finite() {
            return Err(Error::Data(format!(
                "default horizon must be positive and finite, got {}",
                self.default_horizon
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension(format!(
                "input has {} covariates but the model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "covariate vector contains NaN or infinity".into(),
            ));
        }
        Ok(())
    }

    /// Arm-specific linear predictors `(η₁, η₀)`: the shared main part plus
    /// the treated/control halves of each pair block.
    pub fn arm_linear_predictors(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_input(x)?;
        let xv = ArrayView1::from(x);
        let c = &self.coefficients;
        let mut main = 0.0;
        for (k, rule) in self.basis.main_rules.iter().enumerate() {
            main += c.main_rule[k] * rule.evaluate_unchecked(xv);
        }
        for term in &self.basis.linear_terms {
            main += c.main_linear[term.feature] * term.apply(x[term.feature]);
        }
        let mut treated = 0.0;
        let mut control = 0.0;
        for (k, rule) in self.basis.treat_rules.iter().enumerate() {
            let r = rule.evaluate_unchecked(xv);
            treated += c.treat_rule_treated[k] * r;
            control += c.treat_rule_control[k] * r;
        }
        for term in &self.basis.linear_terms {
            let l = term.apply(x[term.feature]);
            treated += c.treat_linear_treated[term.feature] * l;
            control += c.treat_linear_control[term.feature] * l;
        }
        Ok((main + treated, main + control))
    }

    /// Predicted arm survivals `S_z(t₀|x) = exp(−H₀(t₀)·e^{η_z})` and their
    /// difference. `horizon = None` uses the model default. Horizons past the
    /// last observed training time use the capped cumulative hazard and set
    /// the extrapolation flag.
    pub fn predict_hte(&self, x: &[f64], horizon: Option<f64>) -> Result<HtePrediction> {
        let t0 = horizon.unwrap_or(self.default_horizon);
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Config(format!(
                "prediction horizon must be positive and finite, got {t0}"
            )));
        }
        let (eta1, eta0) = self.arm_linear_predictors(x)?;
        let h0 = self.baseline.cumulative(t0);
        let survival_treated = (-h0 * eta1.exp()).exp();
        let survival_control = (-h0 * eta0.exp()).exp();
        Ok(HtePrediction {
            survival_treated,
            survival_control,
            hte: survival_treated - survival_control,
            horizon: t0,
            extrapolated: t0 > self.baseline.max_observed_time(),
        })
    }

    /// Row-wise prediction over a covariate matrix (parallel, order
    /// preserving).
    pub fn predict_batch(
        &self,
        covariates: ArrayView2<'_, f64>,
        horizon: Option<f64>,
    ) -> Result<Vec<HtePrediction>> {
        if covariates.ncols() != self.n_features() {
            return Err(Error::Dimension(format!(
                "input has {} covariate columns but the model expects {}",
                covariates.ncols(),
                self.n_features()
            )));
        }
        (0..covariates.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = covariates.row(i).to_vec();
                self.predict_hte(&row, horizon)
            })
            .collect()
    }

    /// Treated-vs-control hazard-ratio factor of treatment rule `k`:
    /// `exp(α_k − β_k)`. Values below 1 mean lower treated-arm hazard where
    /// the rule fires.
    pub fn rule_hazard_ratio(&self, k: usize) -> Result<f64> {
        let n = self.basis.treat_rules.len();
        if k >= n {
            return Err(Error::Dimension(format!(
                "treatment rule index {k} out of range for {n} rules"
            )));
        }
        Ok((self.coefficients.treat_rule_treated[k] - self.coefficients.treat_rule_control[k]).exp())
    }

    /// Counts pairs where exactly one member is nonzero — the joint-selection
    /// constraint forbids this, so a correct fit reports 0.
    pub fn paired_selection_violations(&self) -> usize {
        let c = &self.coefficients;
        let rule_pairs = c
            .treat_rule_treated
            .iter()
            .zip(&c.treat_rule_control)
            .filter(|(a, b)| (**a == 0.0) != (**b == 0.0))
            .count();
        let linear_pairs = self
            .basis
            .linear_terms
            .iter()
            .filter(|t| {
                (c.treat_linear_treated[t.feature] == 0.0)
                    != (c.treat_linear_control[t.feature] == 0.0)
            })
            .count();
        rule_pairs + linear_pairs
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
