//! Dividing candidate rules over (covariates, treatment indicator) into
//! main-effect rules (no treatment condition) and treatment-effect rules
//! (treatment pinned to one arm, condition stripped).

use crate::boost::CandidateRuleSet;
use crate::rule::Rule;

/// Rules over covariates only, after removing treatment conditions.
/// `n_main_raw`/`n_treat_raw` count assignments before deduplication.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartitionedRules {
    pub main_rules: Vec<Rule>,
    pub treat_rules: Vec<Rule>,
    pub n_main_raw: usize,
    pub n_treat_raw: usize,
}

/// Which treatment values a rule's condition set admits.
fn admitted_arms(rule: &Rule, treatment_feature: usize) -> (bool, bool) {
    match rule
        .conditions()
        .iter()
        .find(|c| c.feature == treatment_feature)
    {
        None => (true, true),
        Some(c) => (c.holds(0.0), c.holds(1.0)),
    }
}

fn strip_treatment(rule: &Rule, treatment_feature: usize) -> Rule {
    Rule::new(
        rule.conditions()
            .iter()
            .filter(|c| c.feature != treatment_feature)
            .cloned(),
    )
    .expect("removing a condition cannot empty an interval")
}

/// Assigns every candidate to exactly one list: rules admitting both arms
/// become main-effect rules; rules pinning one arm become treatment-effect
/// rules with the treatment condition removed. Duplicates (after stripping)
/// keep their first occurrence.
pub fn partition(candidates: &CandidateRuleSet) -> PartitionedRules {
    let z = candidates.treatment_feature;
    let mut out = PartitionedRules::default();
    for rule in &candidates.rules {
        let stripped = strip_treatment(rule, z);
        match admitted_arms(rule, z) {
            (true, true) => {
                out.n_main_raw += 1;
                if !out.main_rules.contains(&stripped) {
                    out.main_rules.push(stripped);
                }
            }
            (false, false) => {
                // cannot be produced by splits on observed 0/1 treatment
                // values; such a rule never fires, so it carries no signal
                log::warn!(
                    "dropping candidate rule whose treatment condition excludes both arms: {rule:?}"
                );
            }
            _ => {
                out.n_treat_raw += 1;
                if !out.treat_rules.contains(&stripped) {
                    out.treat_rules.push(stripped);
                }
            }
        }
    }
    out
}
