//! Winsorized, rescaled linear terms for continuous and binary covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A covariate clamped to its `[q, 1−q]` empirical quantiles and rescaled so
/// its spread is comparable to a 0/1 rule column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub feature: usize,
    pub lower: f64,
    pub upper: f64,
    /// `0.4 / (population std of the winsorized column)`.
    pub scale: f64,
}

impl LinearTerm {
    /// Clamp to the winsor bounds, before rescaling.
    pub fn winsorize(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }

    /// The model term itself: `scale · clamp(value)`.
    pub fn apply(&self, value: f64) -> f64 {
        self.scale * self.winsorize(value)
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = q·(n−1)`).
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Fits the winsor bounds and scale for one covariate column. Returns
/// `Ok(None)` when the winsorized column is constant, in which case the term
/// is excluded from the model rather than given an infinite scale.
pub fn fit_linear_term(feature: usize, column: &[f64], q: f64) -> Result<Option<LinearTerm>> {
    if column.len() < 2 {
        return Err(Error::Data(format!(
            "linear term for feature {feature} needs at least 2 observations, got {}",
            column.len()
        )));
    }
    if !(0.0..0.5).contains(&q) {
        return Err(Error::Config(format!(
            "winsor fraction must lie in [0, 0.5), got {q}"
        )));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lower = quantile(&sorted, q);
    let upper = quantile(&sorted, 1.0 - q);

    let n = column.len() as f64;
    let clamped: Vec<f64> = column.iter().map(|&v| v.clamp(lower, upper)).collect();
    let mean = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(None);
    }
    Ok(Some(LinearTerm {
        feature,
        lower,
        upper,
        scale: 0.4 / std,
    }))
}
