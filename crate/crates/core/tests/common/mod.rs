//! Shared helpers for the integration suites: an independently written
//! Newton–Raphson Cox fitter used as a solver cross-check, a small synthetic
//! two-arm trial generator, and tiny numeric utilities.
//!
//! The Newton fitter deliberately shares no code or formulation with the
//! library's proximal-gradient solver: it builds explicit weighted risk-set
//! sums (S0, S1, S2) per event time and solves the dense Newton system with
//! hand-rolled Gaussian elimination, so agreement between the two is strong
//! evidence that both are correct.

#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rulehaz::SurvivalDataset;

/// Maximizes the Breslow partial likelihood by damped Newton–Raphson.
/// Panics if the Hessian turns singular or the gradient fails to vanish —
/// the caller is expected to supply well-conditioned instances.
pub fn newton_cox(design: ArrayView2<'_, f64>, times: &[f64], events: &[u8]) -> Vec<f64> {
    let n = design.nrows();
    let p = design.ncols();
    assert_eq!(times.len(), n);
    assert_eq!(events.len(), n);
    let mut unique_event_times: Vec<f64> = (0..n)
        .filter(|&i| events[i] == 1)
        .map(|i| times[i])
        .collect();
    unique_event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    unique_event_times.dedup();
    assert!(
        !unique_event_times.is_empty(),
        "Newton oracle needs at least one event"
    );

    let nll = |beta: &[f64]| -> f64 {
        let eta: Vec<f64> = (0..n).map(|i| row_dot(design, i, beta)).collect();
        let mut value = 0.0;
        for &s in &unique_event_times {
            let d = (0..n).filter(|&i| events[i] == 1 && times[i] == s).count() as f64;
            let peak = (0..n)
                .filter(|&i| times[i] >= s)
                .map(|i| eta[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..n)
                .filter(|&i| times[i] >= s)
                .map(|i| (eta[i] - peak).exp())
                .sum();
            value += d * (peak + sum.ln());
        }
        for i in 0..n {
            if events[i] == 1 {
                value -= eta[i];
            }
        }
        value
    };

    let mut beta = vec![0.0_f64; p];
    for _ in 0..200 {
        let eta: Vec<f64> = (0..n).map(|i| row_dot(design, i, &beta)).collect();
        let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let mut grad = vec![0.0_f64; p];
        let mut hess = vec![vec![0.0_f64; p]; p];
        for i in 0..n {
            if events[i] == 1 {
                for a in 0..p {
                    grad[a] -= design[[i, a]];
                }
            }
        }
        for &s in &unique_event_times {
            let members: Vec<usize> = (0..n).filter(|&i| times[i] >= s).collect();
            let d = (0..n).filter(|&i| events[i] == 1 && times[i] == s).count() as f64;
            let s0: f64 = members.iter().map(|&i| weights[i]).sum();
            let mut s1 = vec![0.0_f64; p];
            let mut s2 = vec![vec![0.0_f64; p]; p];
            for &i in &members {
                for a in 0..p {
                    s1[a] += weights[i] * design[[i, a]];
                    for b in 0..p {
                        s2[a][b] += weights[i] * design[[i, a]] * design[[i, b]];
                    }
                }
            }
            for a in 0..p {
                grad[a] += d * s1[a] / s0;
                for b in 0..p {
                    hess[a][b] += d * (s2[a][b] / s0 - s1[a] * s1[b] / (s0 * s0));
                }
            }
        }
        let grad_norm = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if grad_norm < 1e-9 {
            return beta;
        }
        let step = solve_dense(&hess, &grad);
        if grad_norm < 1e-5 {
            // Quadratic-convergence basin: objective differences are below
            // float noise here, so a line search would reject good steps.
            for (b, s) in beta.iter_mut().zip(&step) {
                *b -= s;
            }
            continue;
        }
        // Armijo backtracking on the negative log likelihood; the Newton
        // direction −step has predicted decrease gᵀ·step.
        let predicted: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let base = nll(&beta);
        let mut t = 1.0;
        loop {
            let candidate: Vec<f64> =
                beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            if nll(&candidate) <= base - 1e-4 * t * predicted || t < 1e-10 {
                beta = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    panic!("Newton oracle failed to converge in 200 iterations");
}

fn row_dot(design: ArrayView2<'_, f64>, i: usize, beta: &[f64]) -> f64 {
    (0..design.ncols()).map(|j| design[[i, j]] * beta[j]).sum()
}

/// Solves `A·x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = b.len();
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row = a[i].clone();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        let diag = m[col][col];
        assert!(diag.abs() > 1e-12, "singular Newton system");
        for row in col + 1..p {
            let factor = m[row][col] / diag;
            for k in col..=p {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = vec![0.0_f64; p];
    for col in (0..p).rev() {
        let mut acc = m[col][p];
        for k in col + 1..p {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    x
}

/// Small randomized two-arm trial with three covariates, a real main effect
/// on the first, and a treatment effect modified by the second:
/// hazard rate `exp(0.6·x₀ + (z − 0.5)·(1.2·x₁ − 0.4))`, censoring
/// Uniform(0.4, 2.5).
pub fn toy_trial(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covariates = Array2::<f64>::zeros((n, 3));
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut treatments = Vec::with_capacity(n);
    for i in 0..n {
        let x0: f64 = StandardNormal.sample(&mut rng);
        let x1 = f64::from(rng.random_bool(0.5));
        let x2: f64 = StandardNormal.sample(&mut rng);
        let z = u8::from(rng.random_bool(0.5));
        covariates[[i, 0]] = x0;
        covariates[[i, 1]] = x1;
        covariates[[i, 2]] = x2;
        let rate = (0.6 * x0 + (f64::from(z) - 0.5) * (1.2 * x1 - 0.4)).exp();
        let u: f64 = rng.random_range(1e-12..1.0);
        let survival = -u.ln() / rate;
        let censoring = rng.random_range(0.4..2.5);
        times.push(survival.min(censoring));
        events.push(u8::from(survival < censoring));
        treatments.push(z);
    }
    SurvivalDataset::new(
        times,
        events,
        treatments,
        covariates,
        vec!["biomarker".into(), "mutation".into(), "age_std".into()],
    )
    .expect("toy trial construction is valid")
}

/// Median of a non-empty slice (average of the central pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
