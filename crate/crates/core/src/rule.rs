//! Rule terms: conjunctions of half-open interval conditions over covariates.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// `x[feature] ∈ [lower, upper)`. Unbounded sides are ±∞ in memory and
/// `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    #[serde(
        serialize_with = "bound::ser",
        deserialize_with = "bound::de_lower",
        default = "bound::neg_inf"
    )]
    pub lower: f64,
    #[serde(
        serialize_with = "bound::ser",
        deserialize_with = "bound::de_upper",
        default = "bound::pos_inf"
    )]
    pub upper: f64,
}

impl Condition {
    pub fn new(feature: usize, lower: f64, upper: f64) -> Self {
        Self {
            feature,
            lower,
            upper,
        }
    }

    pub fn below(feature: usize, upper: f64) -> Self {
        Self::new(feature, f64::NEG_INFINITY, upper)
    }

    pub fn at_least(feature: usize, lower: f64) -> Self {
        Self::new(feature, lower, f64::INFINITY)
    }

    pub fn holds(&self, value: f64) -> bool {
        value >= self.lower && value < self.upper
    }
}

mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn neg_inf() -> f64 {
        f64::NEG_INFINITY
    }

    pub fn pos_inf() -> f64 {
        f64::INFINITY
    }

    pub fn ser<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn de_lower<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn de_upper<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// A conjunction of interval conditions; evaluates to 0 or 1 on a covariate
/// vector. At most one condition per feature (conditions on the same feature
/// are merged by interval intersection), stored sorted by feature index. An
/// empty conjunction is the always-true rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rule {
    conditions: Vec<Condition>,
}

impl Rule {
    /// Builds a rule from raw conditions, intersecting intervals that share
    /// a feature. Returns `None` when an intersection is empty (the rule
    /// would be identically false).
    pub fn new(conditions: impl IntoIterator<Item = Condition>) -> Option<Self> {
        let mut merged: Vec<Condition> = Vec::new();
        for cond in conditions {
            match merged.iter_mut().find(|c| c.feature == cond.feature) {
                Some(existing) => {
                    existing.lower = existing.lower.max(cond.lower);
                    existing.upper = existing.upper.min(cond.upper);
                }
                None => merged.push(cond),
            }
        }
        if merged.iter().any(|c| c.lower >= c.upper) {
            return None;
        }
        merged.sort_by_key(|c| c.feature);
        Some(Self { conditions: merged })
    }

    pub const fn always_true() -> Self {
        Self {
            conditions: Vec::new(),
        }
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Distinct features referenced by this rule (`m_k` in the importance
    /// formulas).
    pub fn n_features(&self) -> usize {
        self.conditions.len()
    }

    pub fn references_feature(&self, feature: usize) -> bool {
        self.conditions.iter().any(|c| c.feature == feature)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.conditions.iter().map(|c| c.feature).max()
    }

    /// 1 iff every condition holds on `x`.
    pub fn evaluate(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if let Some(max) = self.max_feature() {
            if max >= x.len() {
                return Err(Error::Dimension(format!(
                    "rule references feature {max} but vector has {} entries",
                    x.len()
                )));
            }
        }
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: ArrayView1<'_, f64>) -> f64 {
        if self.conditions.iter().all(|c| c.holds(x[c.feature])) {
            1.0
        } else {
            0.0
        }
    }

    /// Fraction of dataset rows on which the rule fires (`ρ_k`).
    pub fn support(&self, data: &SurvivalDataset) -> Result<f64> {
        if data.n_rows() == 0 {
            return Err(Error::Data("support of a rule on an empty dataset".into()));
        }
        let mut hits = 0usize;
        for i in 0..data.n_rows() {
            if self.evaluate(data.row(i))? == 1.0 {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.n_rows() as f64)
    }

    /// `"feature<v"` / `"feature>=v"` segments joined by `" & "`. A
    /// two-sided interval renders as both segments.
    pub fn render(&self, feature_names: &[String]) -> String {
        if self.conditions.is_empty() {
            return "(always)".to_string();
        }
        let mut parts = Vec::new();
        for c in &self.conditions {
            let name = feature_names
                .get(c.feature)
                .cloned()
                .unwrap_or_else(|| format!("x{}", c.feature + 1));
            if c.lower.is_finite() {
                parts.push(format!("{name}>={}", trim_float(c.lower)));
            }
            if c.upper.is_finite() {
                parts.push(format!("{name}<{}", trim_float(c.upper)));
            }
        }
        parts.join(" & ")
    }
}

fn trim_float(v: f64) -> String {
    // Full precision, but without a trailing ".0" noise for integers.
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn dataset_with_rows(rows: Array2<f64>) -> SurvivalDataset {
        let n = rows.nrows();
        let names = (0..rows.ncols()).map(|j| format!("x{}", j + 1)).collect();
        SurvivalDataset::new(vec![1.0; n], vec![1; n], vec![0; n], rows, names).unwrap()
    }

    #[test]
    fn half_open_boundary_is_inclusive_below() {
        let rule = Rule::new([Condition::at_least(0, 0.0)]).unwrap();
        assert_eq!(rule.evaluate(array![0.5, 0.0].view()).unwrap(), 1.0);
        assert_eq!(rule.evaluate(array![-0.5, 0.0].view()).unwrap(), 0.0);
        // lower bound itself is included
        assert_eq!(rule.evaluate(array![0.0, 0.0].view()).unwrap(), 1.0);
    }

    #[test]
    fn upper_bound_is_exclusive() {
        let rule = Rule::new([Condition::below(0, 1.0)]).unwrap();
        assert_eq!(rule.evaluate(array![1.0].view()).unwrap(), 0.0);
        assert_eq!(rule.evaluate(array![0.999].view()).unwrap(), 1.0);
    }

    #[test]
    fn two_condition_rule_matches_subject() {
        // cd40 < 266.5 & age < 39.5 on (cd40=257, age=23)
        let rule = Rule::new([Condition::below(0, 266.5), Condition::below(1, 39.5)]).unwrap();
        assert_eq!(rule.evaluate(array![257.0, 23.0].view()).unwrap(), 1.0);
        assert_eq!(rule.evaluate(array![300.0, 23.0].view()).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_feature_is_dimension_error() {
        let rule = Rule::new([Condition::at_least(3, 0.0)]).unwrap();
        assert!(matches!(
            rule.evaluate(array![1.0].view()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conditions_on_same_feature_intersect() {
        let rule = Rule::new([
            Condition::at_least(0, 1.0),
            Condition::below(0, 5.0),
            Condition::at_least(0, 2.0),
        ])
        .unwrap();
        assert_eq!(rule.conditions().len(), 1);
        assert_eq!(rule.conditions()[0].lower, 2.0);
        assert_eq!(rule.conditions()[0].upper, 5.0);
    }

    #[test]
    fn empty_intersection_is_none() {
        assert!(Rule::new([Condition::at_least(0, 5.0), Condition::below(0, 1.0)]).is_none());
    }

    #[test]
    fn support_counts_matching_rows() {
        let data = dataset_with_rows(array![[0.0], [1.0], [2.0], [3.0]]);
        let rule = Rule::new([Condition::at_least(0, 2.0)]).unwrap();
        assert_eq!(rule.support(&data).unwrap(), 0.5);
        assert_eq!(Rule::always_true().support(&data).unwrap(), 1.0);
    }

    #[test]
    fn render_matches_report_style() {
        let rule = Rule::new([Condition::below(0, 266.5), Condition::at_least(1, 39.5)]).unwrap();
        let names = vec!["cd40".to_string(), "age".to_string()];
        assert_eq!(rule.render(&names), "cd40<266.5 & age>=39.5");
    }

    #[test]
    fn json_uses_null_for_unbounded_sides() {
        let rule = Rule::new([Condition::below(0, 2.5)]).unwrap();
        let json = serde_json::to_string(&rule).unwrap();
        assert_eq!(json, r#"[{"feature":0,"lower":null,"upper":2.5}]"#);
        let back: Rule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rule);
    }

    proptest! {
        /// Merging duplicate conditions never changes the evaluation.
        #[test]
        fn merged_rule_agrees_with_brute_force(
            conds in proptest::collection::vec(
                (0usize..4, -2.0f64..2.0, -2.0f64..2.0),
                1..6
            ),
            x in proptest::collection::vec(-3.0f64..3.0, 4)
        ) {
            let conditions: Vec<Condition> = conds
                .iter()
                .map(|&(f, a, b)| Condition::new(f, a.min(b), a.max(b) + 0.25))
                .collect();
            let xs = ndarray::Array1::from(x);
            let brute = conditions
                .iter()
                .all(|c| c.holds(xs[c.feature]));
            match Rule::new(conditions) {
                Some(rule) => {
                    prop_assert_eq!(rule.evaluate(xs.view()).unwrap(), f64::from(u8::from(brute)));
                }
                None => {
                    // an empty intersection means no x can satisfy all conditions
                    prop_assert!(!brute);
                }
            }
        }

        /// Support is always in [0,1] and equals the matching fraction.
        #[test]
        fn support_is_fraction_of_matches(
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..12),
            lo in -1.5f64..0.0,
            width in 0.1f64..2.0,
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let data = dataset_with_rows(Array2::from_shape_vec((n, 3), flat).unwrap());
            let rule = Rule::new([Condition::new(1, lo, lo + width)]).unwrap();
            let support = rule.support(&data).unwrap();
            prop_assert!((0.0..=1.0).contains(&support));
            let matches = rows.iter().filter(|r| r[1] >= lo && r[1] < lo + width).count();
            prop_assert_eq!(support, matches as f64 / n as f64);
        }
    }
}
