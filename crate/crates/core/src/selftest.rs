//! Invariant checks runnable from the command line.

use rand::Rng as _;
use serde::Serialize;

use crate::clt::{covariance_lambda, hessian_at};
use crate::compare::random_transition_matrix;
use crate::error::Result;
use crate::markov::{
    lift_transition, marginal_consistency, stationary_law, ProbabilityLaw, TransitionMatrix,
    DEFAULT_M0,
};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error.
    pub worst: f64,
    pub tolerance: f64,
}

/// `Σ ν_ij ln[(ν_ij / Σ_t ν_it) / (π_ij / Σ_t π_it)]` for unnormalized `ν`.
fn h(nu: &[f64], pi: &ProbabilityLaw) -> f64 {
    let n = pi.n_states();
    let mut total = 0.0;
    for i in 0..n {
        let r: f64 = nu[i * n..(i + 1) * n].iter().sum();
        for j in 0..n {
            let v = nu[i * n + j];
            if v > 0.0 {
                total += v * ((v / r) / (pi.pair(i, j) / pi.row_mass(i))).ln();
            }
        }
    }
    total
}

fn marginal_roundtrip(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for rep in 0..100u64 {
        let n = [2, 3, 5][rep as usize % 3];
        let q = random_transition_matrix(n, derive_seed(seed, rep))?;
        let pi = stationary_law(&lift_transition(&q), DEFAULT_M0)?.law;
        worst = worst.max(marginal_consistency(&pi)?.max_abs_diff(&q));
    }
    Ok(CheckResult {
        name: "marginal round trip",
        passed: worst < 1e-8,
        worst,
        tolerance: 1e-8,
    })
}

/// Transition matrix with every entry at least `1 / (3N)`, so the laws it
/// induces stay well inside the simplex for finite differencing.
fn interior_transition_matrix(n: usize, seed: u64) -> Result<TransitionMatrix> {
    let mut rng = stream_rng(seed, 0);
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}

fn hessian_fd(seed: u64) -> Result<CheckResult> {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for rep in 0..20u64 {
        let n = 2 + rep as usize % 2;
        let q = interior_transition_matrix(n, derive_seed(seed, 1000 + rep))?;
        let pi = stationary_law(&lift_transition(&q), DEFAULT_M0)?.law;
        let hess = hessian_at(&pi)?;
        let base = pi.values().to_vec();
        let d = base.len();
        let at = |shifts: &[(usize, f64)]| {
            let mut v = base.clone();
            for &(k, s) in shifts {
                v[k] += s;
            }
            h(&v, &pi)
        };
        for a in 0..d {
            let grad = (at(&[(a, step)]) - at(&[(a, -step)])) / (2.0 * step);
            worst = worst.max(grad.abs());
            for b in 0..d {
                let fd = (at(&[(a, step), (b, step)]) - at(&[(a, step), (b, -step)])
                    - at(&[(a, -step), (b, step)])
                    + at(&[(a, -step), (b, -step)]))
                    / (4.0 * step * step);
                worst = worst.max((fd - hess.get(a, b)).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "hessian finite differences",
        passed: worst < 1e-4,
        worst,
        tolerance: 1e-4,
    })
}

fn lambda_row_sums(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for rep in 0..10u64 {
        let n = 2 + rep as usize % 3;
        let q = random_transition_matrix(n, derive_seed(seed, 2000 + rep))?;
        let p = lift_transition(&q);
        let pi = stationary_law(&p, DEFAULT_M0)?.law;
        worst = worst.max(covariance_lambda(&pi, &p, DEFAULT_M0)?.max_abs_row_sum());
    }
    Ok(CheckResult {
        name: "covariance row sums",
        passed: worst < 1e-8,
        worst,
        tolerance: 1e-8,
    })
}

pub fn run(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        marginal_roundtrip(seed)?,
        hessian_fd(seed)?,
        lambda_row_sums(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run(5).unwrap() {
            assert!(c.passed, "{} worst {}", c.name, c.worst);
        }
    }
}
