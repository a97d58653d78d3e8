//! Breslow step-function estimate of the cumulative baseline hazard from
//! fitted linear predictors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous cumulative baseline hazard: a positive increment at each
/// distinct event time, `H₀(t) = Σ_{s ≤ t} increment(s)`, `H₀(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    event_times: Vec<f64>,
    increments: Vec<f64>,
    /// Largest observed time in the estimation data (event or censored);
    /// horizons beyond it are extrapolations.
    max_observed_time: f64,
}

impl BaselineHazard {
    /// Breslow estimator: the increment at event time `s` is
    /// `(#events at s) / Σ_{t_m ≥ s} e^{η_m}`. The largest predictor is
    /// factored out of the exponentials for stability.
    pub fn estimate(times: &[f64], events: &[u8], eta: &[f64]) -> Result<Self> {
        let n = times.len();
        if events.len() != n || eta.len() != n {
            return Err(Error::Dimension(format!(
                "times/events/eta lengths differ: {n}/{}/{}",
                events.len(),
                eta.len()
            )));
        }
        if n == 0 {
            return Err(Error::Data("baseline estimation on zero rows".into()));
        }
        if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Data("times must be positive and finite".into()));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "linear predictor contains NaN or infinity".into(),
            ));
        }
        let max_eta = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));

        // Risk-set sums per distinct time, walked descending.
        let mut event_times = Vec::new();
        let mut increments = Vec::new();
        let mut groups: Vec<(f64, usize, f64)> = Vec::new(); // (time, d, denom·e^{−max})
        let mut acc = 0.0;
        let mut hi = n;
        while hi > 0 {
            let t = times[order[hi - 1]];
            let mut lo = hi;
            let mut d = 0usize;
            while lo > 0 && times[order[lo - 1]] == t {
                lo -= 1;
                acc += (eta[order[lo]] - max_eta).exp();
                d += usize::from(events[order[lo]] == 1);
            }
            if d > 0 {
                groups.push((t, d, acc));
            }
            hi = lo;
        }
        for &(t, d, denom) in groups.iter().rev() {
            event_times.push(t);
            increments.push(d as f64 / (denom * max_eta.exp()));
        }
        Ok(Self {
            event_times,
            increments,
            max_observed_time: times[order[n - 1]],
        })
    }

    /// `H₀(t)`: sum of increments at event times ≤ `t` (inclusive).
    pub fn cumulative(&self, t: f64) -> f64 {
        let upto = self.event_times.partition_point(|&s| s <= t);
        self.increments[..upto].iter().sum()
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn max_observed_time(&self) -> f64 {
        self.max_observed_time
    }
}
