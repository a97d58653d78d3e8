//! Gradient boosting on the Cox partial-likelihood gradient, decomposing
//! every fitted tree into candidate interval rules over (covariates,
//! treatment indicator).

use ndarray::Array2;
use rand::seq::index::sample;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cox::CoxContext;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::rule::Rule;
use crate::tree::RegressionTree;

/// How many rows each boosting step trains on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsample {
    /// `floor(min(N/2, 100 + 6√N))` rows.
    Default,
    /// `floor(fraction · N)` rows; fraction in (0, 1].
    Fraction(f64),
    /// A fixed row count in `[1, N]`.
    Count(usize),
}

/// Configuration for the rule-generating booster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Number of boosting iterations (trees), `M`.
    pub num_trees: usize,
    /// Mean terminal-node count of the randomized tree sizes; ≥ 2. At
    /// exactly 2 every tree is a stump.
    pub mean_depth: f64,
    /// Learning rate applied to each tree's contribution, in (0, 1].
    pub shrinkage: f64,
    pub subsample: Subsample,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            num_trees: 500,
            mean_depth: 2.0,
            shrinkage: 0.01,
            subsample: Subsample::Default,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::Config("num_trees must be positive".into()));
        }
        if !(self.mean_depth >= 2.0) {
            return Err(Error::Config(format!(
                "mean tree size must be ≥ 2, got {}",
                self.mean_depth
            )));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!(
                "shrinkage must lie in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if let Subsample::Fraction(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "subsample fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    fn subsample_size(&self, n: usize) -> Result<usize> {
        let size = match self.subsample {
            Subsample::Default => {
                let nf = n as f64;
                (nf / 2.0).min(100.0 + 6.0 * nf.sqrt()).floor() as usize
            }
            Subsample::Fraction(f) => (f * n as f64).floor() as usize,
            Subsample::Count(c) => c,
        };
        if size < 1 || size > n {
            return Err(Error::Config(format!(
                "subsample resolves to {size} rows for N = {n}; need 1..=N"
            )));
        }
        Ok(size)
    }
}

/// Candidate rules over the augmented feature space; the treatment indicator
/// participates as the extra feature at `treatment_feature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRuleSet {
    pub rules: Vec<Rule>,
    pub treatment_feature: usize,
}

/// Gradient of the Breslow log partial likelihood with respect to the score
/// vector:
/// `r_i = δ_i − e^{F_i} · Σ_{events e: t_e ≤ t_i} d_e / Σ_{t_j ≥ t_e} e^{F_j}`.
/// The largest score is subtracted inside every exponential, so only the
/// invariant ratios are formed.
pub fn cox_gradient(times: &[f64], events: &[u8], scores: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() && events.is_empty() && scores.is_empty() {
        return Ok(Vec::new());
    }
    let ctx = CoxContext::new(times, events)?;
    ctx.score_gradient(scores)
}

/// Breslow log partial likelihood of a score vector — the objective whose
/// score-space gradient [`cox_gradient`] returns:
/// `ℓ(F) = Σ δ_i F_i − Σ_{event times s} d_s · log Σ_{t_j ≥ s} e^{F_j}`.
pub fn cox_log_partial_likelihood(times: &[f64], events: &[u8], scores: &[f64]) -> Result<f64> {
    let ctx = CoxContext::new(times, events)?;
    Ok(-ctx.nll_unscaled(scores)?)
}

/// Random terminal-node count `2 + floor(u)`, `u ~ Exponential(mean L̄ − 2)`.
/// `L̄ = 2` is the degenerate stump case.
pub fn draw_tree_size(mean_depth: f64, rng: &mut impl rand::Rng) -> Result<usize> {
    if !(mean_depth >= 2.0) {
        return Err(Error::Config(format!(
            "mean tree size must be ≥ 2, got {mean_depth}"
        )));
    }
    if mean_depth == 2.0 {
        return Ok(2);
    }
    let exp = Exp::new(1.0 / (mean_depth - 2.0))
        .map_err(|e| Error::Config(format!("invalid tree-size distribution: {e}")))?;
    Ok(2 + exp.sample(rng).floor() as usize)
}

pub(crate) struct BoostOutcome {
    pub rules: Vec<Rule>,
    /// Score function after the last iteration and per-tree leaf counts;
    /// consumed only by diagnostics and the test suite.
    #[cfg_attr(not(test), allow(dead_code))]
    pub final_scores: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub leaf_counts: Vec<usize>,
}

/// Core boosting loop; assumes `config` has been validated except that any
/// `shrinkage ≥ 0` is accepted (0 freezes the score function, useful for
/// verifying the update rule in isolation).
pub(crate) fn boost_impl(data: &SurvivalDataset, config: &BoostConfig) -> Result<BoostOutcome> {
    let n = data.n_rows();
    let p = data.n_features();
    if n < 2 {
        return Err(Error::Data(format!(
            "boosting needs at least 2 rows, got {n}"
        )));
    }
    if data.n_events() == 0 {
        return Err(Error::Data(
            "boosting needs at least one observed event".into(),
        ));
    }
    let h_size = config.subsample_size(n)?;

    // Augmented features: covariates plus the treatment indicator as the
    // last column, so rules may condition on the arm.
    let mut features = Array2::<f64>::zeros((n, p + 1));
    features
        .slice_mut(ndarray::s![.., ..p])
        .assign(data.covariates());
    for i in 0..n {
        features[[i, p]] = f64::from(data.treatments()[i]);
    }

    let mut scores = vec![0.0_f64; n];
    let mut rules = Vec::new();
    let mut leaf_counts = Vec::with_capacity(config.num_trees);
    for m in 0..config.num_trees {
        let residuals = cox_gradient(data.times(), data.events(), &scores)?;
        let mut rng = stream_rng(config.seed, Domain::BoostTree, m as u64);
        let leaves = draw_tree_size(config.mean_depth, &mut rng)?;
        let mut subsample: Vec<usize> = sample(&mut rng, n, h_size).into_vec();
        subsample.sort_unstable();
        let tree = RegressionTree::fit(features.view(), &residuals, &subsample, leaves);
        if config.shrinkage > 0.0 {
            for (i, s) in scores.iter_mut().enumerate() {
                *s += config.shrinkage * tree.predict_row(features.view(), i);
            }
        }
        leaf_counts.push(tree.n_leaves());
        rules.extend(tree.decompose_into_rules());
    }
    Ok(BoostOutcome {
        rules,
        final_scores: scores,
        leaf_counts,
    })
}

/// Runs the full rule-generation booster and returns the candidate rules
/// over (covariates, treatment indicator).
pub fn boost(data: &SurvivalDataset, config: &BoostConfig) -> Result<CandidateRuleSet> {
    config.validate()?;
    let outcome = boost_impl(data, config)?;
    Ok(CandidateRuleSet {
        rules: outcome.rules,
        treatment_feature: data.n_features(),
    })
}
