//! Shared Breslow partial-likelihood computations over a presorted time
//! axis: the booster's score-space gradient and the solver's objective both
//! reduce to risk-set sums over tied-time groups.

use crate::error::{Error, Result};

/// Precomputed sort order and tie structure for one (times, events) pair,
/// so repeated likelihood/gradient evaluations cost O(N) instead of
/// O(N log N).
#[derive(Debug, Clone)]
pub(crate) struct CoxContext {
    /// Row indices sorted by ascending time (ties by index).
    order: Vec<usize>,
    /// Half-open ranges into `order` grouping tied times, ascending.
    tie_groups: Vec<(usize, usize)>,
    /// Event count within each tie group.
    events_per_group: Vec<usize>,
    events: Vec<u8>,
    n_events: usize,
}

impl CoxContext {
    pub(crate) fn new(times: &[f64], events: &[u8]) -> Result<Self> {
        let n = times.len();
        if events.len() != n {
            return Err(Error::Dimension(format!(
                "times and events lengths differ: {n} vs {}",
                events.len()
            )));
        }
        if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Data("times must be positive and finite".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));
        let mut tie_groups = Vec::new();
        let mut events_per_group = Vec::new();
        let mut lo = 0;
        while lo < n {
            let t = times[order[lo]];
            let mut hi = lo;
            while hi < n && times[order[hi]] == t {
                hi += 1;
            }
            tie_groups.push((lo, hi));
            events_per_group.push((lo..hi).filter(|&pos| events[order[pos]] == 1).count());
            lo = hi;
        }
        Ok(Self {
            order,
            tie_groups,
            events_per_group,
            events: events.to_vec(),
            n_events: events.iter().filter(|&&e| e == 1).count(),
        })
    }

    pub(crate) fn n_events(&self) -> usize {
        self.n_events
    }

    fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.events.len() {
            return Err(Error::Dimension(format!(
                "linear predictor has {} entries for {} rows",
                eta.len(),
                self.events.len()
            )));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "linear predictor contains NaN or infinity".into(),
            ));
        }
        Ok(())
    }

    /// Risk-set weight sums per tie group: `denom_g = Σ_{t_j ≥ t_g} e^{η_j − max η}`,
    /// plus the shifted weights themselves.
    fn risk_denominators(&self, eta: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let max_eta = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = eta.iter().map(|v| (v - max_eta).exp()).collect();
        let mut denoms = vec![0.0; self.tie_groups.len()];
        let mut acc = 0.0;
        for (g, &(lo, hi)) in self.tie_groups.iter().enumerate().rev() {
            for pos in lo..hi {
                acc += weights[self.order[pos]];
            }
            denoms[g] = acc;
        }
        (denoms, weights, max_eta)
    }

    /// Unscaled negative log partial likelihood (Breslow ties):
    /// `Σ_g d_g · log Σ_{t_j ≥ t_g} e^{η_j} − Σ_{δ_i=1} η_i`, stabilized by
    /// shifting every exponent by max η.
    pub(crate) fn nll_unscaled(&self, eta: &[f64]) -> Result<f64> {
        self.check_eta(eta)?;
        let (denoms, _, max_eta) = self.risk_denominators(eta);
        let mut nll = 0.0;
        for (g, &(lo, hi)) in self.tie_groups.iter().enumerate() {
            let d = self.events_per_group[g];
            if d == 0 {
                continue;
            }
            nll += d as f64 * (max_eta + denoms[g].ln());
            for pos in lo..hi {
                let i = self.order[pos];
                if self.events[i] == 1 {
                    nll -= eta[i];
                }
            }
        }
        Ok(nll)
    }

    /// Gradient of the log partial likelihood with respect to the linear
    /// predictor: `g_i = δ_i − e^{η_i} Σ_{event groups g: t_g ≤ t_i} d_g / denom_g`.
    pub(crate) fn score_gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check_eta(eta)?;
        let (denoms, weights, _) = self.risk_denominators(eta);
        let mut gradient = vec![0.0; eta.len()];
        let mut cum = 0.0;
        for (g, &(lo, hi)) in self.tie_groups.iter().enumerate() {
            cum += self.events_per_group[g] as f64 / denoms[g];
            for pos in lo..hi {
                let i = self.order[pos];
                gradient[i] = f64::from(self.events[i]) - weights[i] * cum;
            }
        }
        Ok(gradient)
    }
}
