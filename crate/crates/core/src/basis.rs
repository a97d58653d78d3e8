//! The fitted model's vocabulary (rules + linear terms) and the grouped
//! design matrix the penalized solver consumes.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linear::{fit_linear_term, LinearTerm};
use crate::partition::PartitionedRules;
use crate::rule::Rule;

/// Main-effect rules, treatment-effect rules, and winsorized linear terms.
/// Linear terms hold their originating covariate index; covariates whose
/// winsorized column is constant carry no term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub main_rules: Vec<Rule>,
    pub treat_rules: Vec<Rule>,
    pub linear_terms: Vec<LinearTerm>,
}

/// One penalty group: a contiguous column range and its penalty weight
/// (1 for singletons, √2 for treatment pairs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Group {
    pub start: usize,
    pub len: usize,
    pub weight: f64,
}

/// Column offsets of the four design blocks:
/// `[main rules | main linear | treatment-rule pairs | linear-term pairs]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignLayout {
    pub n_main_rules: usize,
    pub n_linear: usize,
    pub n_treat_rules: usize,
}

impl DesignLayout {
    pub fn main_rules_start(&self) -> usize {
        0
    }

    pub fn main_linear_start(&self) -> usize {
        self.n_main_rules
    }

    pub fn treat_pairs_start(&self) -> usize {
        self.n_main_rules + self.n_linear
    }

    pub fn linear_pairs_start(&self) -> usize {
        self.treat_pairs_start() + 2 * self.n_treat_rules
    }

    pub fn n_columns(&self) -> usize {
        self.linear_pairs_start() + 2 * self.n_linear
    }

    /// Singleton groups for the main blocks, two-column groups for the pairs.
    pub fn groups(&self) -> Vec<Group> {
        let mut groups = Vec::with_capacity(self.n_main_rules + self.n_linear * 2 + self.n_treat_rules);
        for i in 0..self.n_main_rules + self.n_linear {
            groups.push(Group {
                start: i,
                len: 1,
                weight: 1.0,
            });
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for k in 0..self.n_treat_rules + self.n_linear {
            groups.push(Group {
                start: self.treat_pairs_start() + 2 * k,
                len: 2,
                weight: sqrt2,
            });
        }
        groups
    }
}

impl BasisSet {
    /// Assembles the basis from partitioned candidate rules: removes
    /// duplicates (first occurrence kept), drops rules with training support
    /// 0 or 1, drops treatment rules that never fire in one of the arms
    /// (their paired column would be identically zero, making joint
    /// selection of the pair vacuous), and fits one winsorized linear term
    /// per non-constant covariate.
    pub fn assemble(
        data: &SurvivalDataset,
        partitioned: &PartitionedRules,
        winsor_q: f64,
    ) -> Result<Self> {
        let main_rules = filter_rules(data, &partitioned.main_rules, false)?;
        let treat_rules = filter_rules(data, &partitioned.treat_rules, true)?;

        let mut linear_terms = Vec::new();
        for j in 0..data.n_features() {
            let column: Vec<f64> = data.covariates().column(j).to_vec();
            if let Some(term) = fit_linear_term(j, &column, winsor_q)? {
                linear_terms.push(term);
            }
        }

        Ok(Self {
            main_rules,
            treat_rules,
            linear_terms,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.main_rules.is_empty() && self.treat_rules.is_empty() && self.linear_terms.is_empty()
    }

    pub fn layout(&self) -> DesignLayout {
        DesignLayout {
            n_main_rules: self.main_rules.len(),
            n_linear: self.linear_terms.len(),
            n_treat_rules: self.treat_rules.len(),
        }
    }

    /// Fills one design row for covariates `x` under treatment arm `z`.
    pub(crate) fn fill_design_row(&self, x: ArrayView1<'_, f64>, z: f64, out: &mut [f64]) {
        let layout = self.layout();
        debug_assert_eq!(out.len(), layout.n_columns());
        for (k, rule) in self.main_rules.iter().enumerate() {
            out[k] = rule.evaluate_unchecked(x);
        }
        let mut col = layout.main_linear_start();
        for term in &self.linear_terms {
            out[col] = term.apply(x[term.feature]);
            col += 1;
        }
        debug_assert_eq!(col, layout.treat_pairs_start());
        for rule in &self.treat_rules {
            let r = rule.evaluate_unchecked(x);
            out[col] = z * r;
            out[col + 1] = (1.0 - z) * r;
            col += 2;
        }
        for term in &self.linear_terms {
            let l = term.apply(x[term.feature]);
            out[col] = z * l;
            out[col + 1] = (1.0 - z) * l;
            col += 2;
        }
    }

    /// Builds the full N × P design with the block layout
    /// `[main rules | main linear | treat-rule pairs | linear pairs]`.
    pub fn build_design(&self, data: &SurvivalDataset) -> Result<Array2<f64>> {
        if self.is_empty() {
            return Err(Error::Data(
                "cannot build a design matrix from an empty basis".into(),
            ));
        }
        if let Some(max) = self
            .main_rules
            .iter()
            .chain(&self.treat_rules)
            .filter_map(Rule::max_feature)
            .max()
        {
            if max >= data.n_features() {
                return Err(Error::Dimension(format!(
                    "basis references feature {max} but data has {} covariates",
                    data.n_features()
                )));
            }
        }
        if let Some(term) = self
            .linear_terms
            .iter()
            .find(|t| t.feature >= data.n_features())
        {
            return Err(Error::Dimension(format!(
                "linear term references feature {} but data has {} covariates",
                term.feature,
                data.n_features()
            )));
        }

        let layout = self.layout();
        let mut design = Array2::<f64>::zeros((data.n_rows(), layout.n_columns()));
        for i in 0..data.n_rows() {
            let z = f64::from(data.treatments()[i]);
            let row = design.row_mut(i).into_slice().expect("contiguous row");
            self.fill_design_row(data.row(i), z, row);
        }
        Ok(design)
    }
}

fn filter_rules(data: &SurvivalDataset, rules: &[Rule], per_arm: bool) -> Result<Vec<Rule>> {
    let n = data.n_rows();
    let mut kept: Vec<Rule> = Vec::new();
    for rule in rules {
        if kept.contains(rule) {
            continue;
        }
        let mut hits = 0usize;
        let mut arm_hits = [0usize; 2];
        for i in 0..n {
            if rule.evaluate(data.row(i))? == 1.0 {
                hits += 1;
                arm_hits[data.treatments()[i] as usize] += 1;
            }
        }
        if hits == 0 || hits == n {
            continue;
        }
        if per_arm && (arm_hits[0] == 0 || arm_hits[1] == 0) {
            continue;
        }
        kept.push(rule.clone());
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::Condition;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn toy_data() -> SurvivalDataset {
        // 6 rows, 2 covariates, alternating treatment.
        SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![1, 0, 1, 1, 0, 1],
            vec![0, 1, 0, 1, 0, 1],
            array![
                [0.0, 1.0],
                [1.0, 0.0],
                [2.0, 1.0],
                [3.0, 0.0],
                [4.0, 1.0],
                [5.0, 0.0]
            ],
            vec!["x1".into(), "x2".into()],
        )
        .unwrap()
    }

    fn rule_ge(feature: usize, lo: f64) -> Rule {
        Rule::new([Condition::at_least(feature, lo)]).unwrap()
    }

    fn rule_lt(feature: usize, hi: f64) -> Rule {
        Rule::new([Condition::below(feature, hi)]).unwrap()
    }

    #[test]
    fn layout_counts_match_block_structure() {
        let layout = DesignLayout {
            n_main_rules: 2,
            n_linear: 2,
            n_treat_rules: 3,
        };
        assert_eq!(layout.n_columns(), 14); // 2 + 2 + 6 + 4
        let groups = layout.groups();
        assert_eq!(groups.len(), 9);
        let singletons = groups.iter().filter(|g| g.len == 1).count();
        let pairs = groups.iter().filter(|g| g.len == 2).count();
        assert_eq!((singletons, pairs), (4, 5));
        for g in &groups {
            if g.len == 1 {
                assert_eq!(g.weight, 1.0);
            } else {
                assert_eq!(g.weight, std::f64::consts::SQRT_2);
            }
        }
        // groups tile the columns exactly once
        let mut seen = vec![false; layout.n_columns()];
        for g in &groups {
            for c in g.start..g.start + g.len {
                assert!(!seen[c]);
                seen[c] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pair_columns_route_by_arm() {
        let data = toy_data();
        let basis = BasisSet {
            main_rules: vec![],
            treat_rules: vec![rule_ge(0, 0.0)], // fires on every row
            linear_terms: vec![],
        };
        let design = basis.build_design(&data).unwrap();
        assert_eq!(design.ncols(), 2);
        for i in 0..data.n_rows() {
            let z = f64::from(data.treatments()[i]);
            assert_eq!(design[[i, 0]], z);
            assert_eq!(design[[i, 1]], 1.0 - z);
        }
    }

    #[test]
    fn assemble_dedups_and_drops_degenerate_support() {
        let data = toy_data();
        let partitioned = PartitionedRules {
            main_rules: vec![
                rule_ge(0, 2.0),
                rule_ge(0, 2.0),  // duplicate
                rule_ge(0, -1.0), // support 1 → dropped
                rule_ge(0, 99.0), // support 0 → dropped
            ],
            treat_rules: vec![rule_lt(0, 3.0)],
            ..Default::default()
        };
        let basis = BasisSet::assemble(&data, &partitioned, 0.0).unwrap();
        assert_eq!(basis.main_rules, vec![rule_ge(0, 2.0)]);
        assert_eq!(basis.treat_rules, vec![rule_lt(0, 3.0)]);
        assert_eq!(basis.linear_terms.len(), 2);
    }

    #[test]
    fn treat_rule_missing_in_one_arm_is_dropped() {
        let data = toy_data();
        // x1 ≥ 4 fires on rows 4 (z=0) and 5 (z=1): kept.
        // x1 ≥ 5 fires only on row 5 (z=1): dropped as arm-degenerate.
        let partitioned = PartitionedRules {
            main_rules: vec![],
            treat_rules: vec![rule_ge(0, 4.0), rule_ge(0, 5.0)],
            ..Default::default()
        };
        let basis = BasisSet::assemble(&data, &partitioned, 0.0).unwrap();
        assert_eq!(basis.treat_rules, vec![rule_ge(0, 4.0)]);
        // the same rule survives as a main rule (support 1/6)
        let as_main = PartitionedRules {
            main_rules: vec![rule_ge(0, 5.0)],
            ..Default::default()
        };
        let basis = BasisSet::assemble(&data, &as_main, 0.0).unwrap();
        assert_eq!(basis.main_rules.len(), 1);
    }

    #[test]
    fn constant_covariate_gets_no_linear_term() {
        let data = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1, 1, 0, 1],
            vec![0, 1, 0, 1],
            array![[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [4.0, 7.0]],
            vec!["x1".into(), "x2".into()],
        )
        .unwrap();
        let partitioned = PartitionedRules {
            main_rules: vec![rule_ge(0, 2.0)],
            ..Default::default()
        };
        let basis = BasisSet::assemble(&data, &partitioned, 0.0).unwrap();
        assert_eq!(basis.linear_terms.len(), 1);
        assert_eq!(basis.linear_terms[0].feature, 0);
        // columns: 1 main rule + 1 linear + 0 pairs + 2 linear-pair cols
        assert_eq!(basis.build_design(&data).unwrap().ncols(), 4);
    }

    #[test]
    fn empty_basis_cannot_build_design() {
        let basis = BasisSet {
            main_rules: vec![],
            treat_rules: vec![],
            linear_terms: vec![],
        };
        assert!(basis.build_design(&toy_data()).is_err());
    }

    #[test]
    fn out_of_range_rule_feature_is_dimension_error() {
        let basis = BasisSet {
            main_rules: vec![rule_ge(7, 0.0)],
            treat_rules: vec![],
            linear_terms: vec![],
        };
        assert!(matches!(
            basis.build_design(&toy_data()),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        /// For every treatment pair and row: at most one of the two paired
        /// columns is nonzero and their sum recovers the raw rule value.
        #[test]
        fn paired_columns_partition_the_rule_value(
            rows in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0u8..2), 4..20),
            cut in -2.0f64..2.0,
        ) {
            let n = rows.len();
            let mut flat = Vec::with_capacity(2 * n);
            let mut z = Vec::with_capacity(n);
            for &(a, b, zi) in &rows {
                flat.extend_from_slice(&[a, b]);
                z.push(zi);
            }
            let data = SurvivalDataset::new(
                vec![1.0; n],
                vec![1; n],
                z,
                Array2::from_shape_vec((n, 2), flat).unwrap(),
                vec!["x1".into(), "x2".into()],
            )
            .unwrap();
            let rule = rule_ge(0, cut);
            let basis = BasisSet {
                main_rules: vec![rule.clone()],
                treat_rules: vec![rule.clone()],
                linear_terms: vec![],
            };
            let design = basis.build_design(&data).unwrap();
            let layout = basis.layout();
            let start = layout.treat_pairs_start();
            for i in 0..n {
                let raw = rule.evaluate(data.row(i)).unwrap();
                let (c1, c0) = (design[[i, start]], design[[i, start + 1]]);
                prop_assert!(c1 == 0.0 || c0 == 0.0);
                prop_assert_eq!(c1 + c0, raw);
                prop_assert_eq!(design[[i, 0]], raw);
            }
        }
    }
}
