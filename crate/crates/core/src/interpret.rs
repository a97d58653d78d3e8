//! Importance measures for the treatment-effect blocks and the
//! human-readable rule report.
//!
//! Rule importance: `I_k = |α_k − β_k|·√(ρ_k(1−ρ_k))` with support ρ_k taken
//! on the interpretation dataset. Linear importance is per-subject
//! `|α*_j − β*_j|·|l_j(x_ij) − l̄_j|`, reported as its mean over subjects.
//! Variable importance adds each rule's importance split equally across the
//! distinct covariates it conditions on.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::model::HteModel;

/// Per-subject and aggregate importance of one covariate's linear pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImportance {
    /// Mean of the per-subject values.
    pub aggregate: f64,
    pub per_subject: Vec<f64>,
}

/// One treatment rule's report row (importance already normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReportRow {
    /// Index into the model's treatment-rule list.
    pub rule_index: usize,
    pub condition: String,
    pub importance: f64,
    pub hazard_ratio: f64,
    pub support: f64,
}

/// One linear term's report row (importance already normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReportRow {
    pub feature: usize,
    pub name: String,
    pub importance: f64,
}

/// One covariate's total (unnormalized) importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportanceRow {
    pub feature: usize,
    pub name: String,
    pub importance: f64,
}

/// Interpretation tables: treatment rules with nonzero pairs, linear terms
/// with nonzero pairs, and per-covariate totals. Rule and linear rows share
/// one normalization mapping the largest raw importance to exactly 100;
/// variable importance stays on the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub rules: Vec<RuleReportRow>,
    pub linear_terms: Vec<LinearReportRow>,
    pub variable_importance: Vec<VariableImportanceRow>,
    /// Raw importance that was mapped to 100 (0 when every row is zero).
    pub normalization: f64,
}

fn check_data(model: &HteModel, data: &SurvivalDataset) -> Result<()> {
    if data.n_features() != model.n_features() {
        return Err(Error::Dimension(format!(
            "interpretation data has {} covariates but the model expects {}",
            data.n_features(),
            model.n_features()
        )));
    }
    Ok(())
}

/// `I_k = |α_k − β_k|·√(ρ_k(1−ρ_k))`, support on the given dataset.
pub fn rule_importance(model: &HteModel, data: &SurvivalDataset, k: usize) -> Result<f64> {
    check_data(model, data)?;
    let n = model.basis.treat_rules.len();
    if k >= n {
        return Err(Error::Dimension(format!(
            "treatment rule index {k} out of range for {n} rules"
        )));
    }
    let diff =
        (model.coefficients.treat_rule_treated[k] - model.coefficients.treat_rule_control[k]).abs();
    let support = model.basis.treat_rules[k].support(data)?;
    Ok(diff * (support * (1.0 - support)).sqrt())
}

/// Per-subject `|α*_j − β*_j|·|l_j(x_ij) − l̄_j|` and its mean. Covariates
/// without a linear term report zero.
pub fn linear_importance(
    model: &HteModel,
    data: &SurvivalDataset,
    j: usize,
) -> Result<LinearImportance> {
    check_data(model, data)?;
    if j >= model.n_features() {
        return Err(Error::Dimension(format!(
            "covariate index {j} out of range for {} covariates",
            model.n_features()
        )));
    }
    let n = data.n_rows();
    let Some(term) = model.basis.linear_terms.iter().find(|t| t.feature == j) else {
        return Ok(LinearImportance {
            aggregate: 0.0,
            per_subject: vec![0.0; n],
        });
    };
    let diff = (model.coefficients.treat_linear_treated[j]
        - model.coefficients.treat_linear_control[j])
        .abs();
    let values: Vec<f64> = data
        .covariates()
        .column(j)
        .iter()
        .map(|&v| term.apply(v))
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let per_subject: Vec<f64> = values.iter().map(|l| diff * (l - mean).abs()).collect();
    let aggregate = per_subject.iter().sum::<f64>() / n as f64;
    Ok(LinearImportance {
        aggregate,
        per_subject,
    })
}

/// `I*_j` per covariate: the aggregate linear importance plus, for every
/// treatment rule conditioning on `j`, that rule's importance divided by the
/// number of distinct covariates it conditions on.
pub fn variable_importance(model: &HteModel, data: &SurvivalDataset) -> Result<Vec<f64>> {
    check_data(model, data)?;
    let p = model.n_features();
    let mut totals = vec![0.0; p];
    for j in 0..p {
        totals[j] = linear_importance(model, data, j)?.aggregate;
    }
    for k in 0..model.basis.treat_rules.len() {
        let rule = &model.basis.treat_rules[k];
        let m = rule.n_features();
        if m == 0 {
            continue;
        }
        let share = rule_importance(model, data, k)? / m as f64;
        for cond in rule.conditions() {
            totals[cond.feature] += share;
        }
    }
    Ok(totals)
}

/// Builds the full report. Only pairs with a nonzero coefficient produce
/// rule/linear rows; an all-zero treatment block yields empty tables.
pub fn build_report(model: &HteModel, data: &SurvivalDataset) -> Result<RuleReport> {
    check_data(model, data)?;
    let c = &model.coefficients;

    let mut rules = Vec::new();
    for (k, rule) in model.basis.treat_rules.iter().enumerate() {
        if c.treat_rule_treated[k] == 0.0 && c.treat_rule_control[k] == 0.0 {
            continue;
        }
        rules.push(RuleReportRow {
            rule_index: k,
            condition: rule.render(model.feature_names.as_slice()),
            importance: rule_importance(model, data, k)?,
            hazard_ratio: model.rule_hazard_ratio(k)?,
            support: rule.support(data)?,
        });
    }

    let mut linear_rows = Vec::new();
    for term in &model.basis.linear_terms {
        let j = term.feature;
        if c.treat_linear_treated[j] == 0.0 && c.treat_linear_control[j] == 0.0 {
            continue;
        }
        linear_rows.push(LinearReportRow {
            feature: j,
            name: model.feature_names[j].clone(),
            importance: linear_importance(model, data, j)?.aggregate,
        });
    }

    let normalization = rules
        .iter()
        .map(|r| r.importance)
        .chain(linear_rows.iter().map(|r| r.importance))
        .fold(0.0_f64, f64::max);
    if normalization > 0.0 {
        for row in &mut rules {
            row.importance = row.importance / normalization * 100.0;
        }
        for row in &mut linear_rows {
            row.importance = row.importance / normalization * 100.0;
        }
    }
    rules.sort_by(|a, b| b.importance.partial_cmp(&a.importance).unwrap());
    linear_rows.sort_by(|a, b| b.importance.partial_cmp(&a.importance).unwrap());

    let variable_importance = variable_importance(model, data)?
        .into_iter()
        .enumerate()
        .map(|(j, importance)| VariableImportanceRow {
            feature: j,
            name: model.feature_names[j].clone(),
            importance,
        })
        .collect();

    Ok(RuleReport {
        rules,
        linear_terms: linear_rows,
        variable_importance,
        normalization,
    })
}

impl RuleReport {
    /// Aligned-text rendering with two-decimal display rounding.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Treatment-effect rules\n");
        if self.rules.is_empty() {
            out.push_str("  (none selected)\n");
        } else {
            let width = self
                .rules
                .iter()
                .map(|r| r.condition.len())
                .max()
                .unwrap_or(9)
                .max(9);
            out.push_str(&format!(
                "  {:<5} {:<width$} {:>10} {:>12} {:>8}\n",
                "rule", "condition", "importance", "hazard_ratio", "support"
            ));
            for r in &self.rules {
                out.push_str(&format!(
                    "  {:<5} {:<width$} {:>10.2} {:>12.2} {:>8.2}\n",
                    r.rule_index, r.condition, r.importance, r.hazard_ratio, r.support
                ));
            }
        }
        out.push_str("\nLinear terms\n");
        if self.linear_terms.is_empty() {
            out.push_str("  (none selected)\n");
        } else {
            out.push_str(&format!("  {:<16} {:>10}\n", "covariate", "importance"));
            for r in &self.linear_terms {
                out.push_str(&format!("  {:<16} {:>10.2}\n", r.name, r.importance));
            }
        }
        out.push_str("\nVariable importance\n");
        for r in &self.variable_importance {
            out.push_str(&format!("  {:<16} {:>10.4}\n", r.name, r.importance));
        }
        out
    }
}
