//! Threshold calibration for the Markov Hoeffding test.
//!
//! Under the null hypothesis `√n (Γ_n − π)` is asymptotically `N(0, Λ)` with
//!
//! ```text
//! Λ_ij = π_i (I_ij − π_j) + Σ_{m≥1} [ π_i (P^m_ij − π_j) + π_j (P^m_ji − π_i) ]
//! ```
//!
//! and a second-order expansion of the divergence around `π` gives
//! `D(Γ_n ‖ π) ≈ (1/2n) · U' ∇²h(π) U` with `U ~ N(0, Λ)`. The weak-convergence
//! threshold `η_wc` is the `(1 − β)` quantile of that quadratic form, obtained
//! by sampling Gaussian vectors. `η_sv = −ln β / n` is the large-deviations
//! threshold, and [`threshold_montecarlo`] simulates the chain itself to give
//! the reference value both are compared against.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    divergence, law_from_counts, stationarity_residual, Alphabet, ChainSampler, InitialLaw,
    ProbabilityLaw, TransitionMatrix,
};
use crate::rng::stream_rng;

/// `π` must satisfy `‖πP − π‖∞ ≤` this before the covariance series is summed.
pub const COVARIANCE_STATIONARY_TOL: f64 = 1e-6;
/// The truncated series stops once its remaining tail is bounded by this.
pub const SERIES_TAIL_TOL: f64 = 1e-12;
/// Minimum number of Gaussian draws for an empirical CDF.
pub const MIN_WC_SAMPLES: usize = 100;

const GAUSSIAN_CHUNK: usize = 256;

/// `∇²h(π)` for `h(ν) = D(ν ‖ π)`, indexed by lifted pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianMatrix {
    alphabet: Alphabet,
    matrix: DMatrix<f64>,
}

impl HessianMatrix {
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }
}

/// Hessian of the divergence at `π`.
///
/// Entry `((i,j),(k,l))` is zero unless `k = i`; on the diagonal it is
/// `1/π_ij − 1/Σ_t π_it`, and off the diagonal within a row block it is
/// `−1/Σ_t π_it`.
pub fn hessian_at(pi: &ProbabilityLaw) -> Result<HessianMatrix> {
    let n = pi.n_states();
    if let Some(k) = pi.values().iter().position(|&v| v <= 0.0) {
        return Err(Error::SupportViolation(k + 1));
    }
    let d = n * n;
    let mut matrix = DMatrix::zeros(d, d);
    for i in 0..n {
        let inv_row = 1.0 / pi.row_mass(i);
        for j in 0..n {
            let a = i * n + j;
            for l in 0..n {
                let b = i * n + l;
                matrix[(a, b)] = if l == j {
                    1.0 / pi.pair(i, j) - inv_row
                } else {
                    -inv_row
                };
            }
        }
    }
    Ok(HessianMatrix {
        alphabet: pi.alphabet(),
        matrix,
    })
}

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|r| m.row(r).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance matrix must be square"));
        }
        Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
    }
}

/// The CLT covariance `Λ` of `√n (Γ_n − π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    #[serde(with = "rows")]
    matrix: DMatrix<f64>,
    /// Truncation order requested.
    pub m0: usize,
    /// Number of explicit matrix powers summed before the tail was closed.
    pub terms_used: usize,
    /// Set when `psd_repair` clamped at least one negative eigenvalue.
    pub psd_repaired: bool,
    /// Frobenius distance moved by `psd_repair`.
    pub repair_distance: f64,
    /// `V · diag(√λ)` from the repair eigendecomposition.
    #[serde(skip)]
    factor: Option<DMatrix<f64>>,
}

impl CovarianceMatrix {
    /// Wrap an arbitrary symmetric matrix (e.g. one loaded from disk).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Self {
            matrix,
            m0: 0,
            terms_used: 0,
            psd_repaired: false,
            repair_distance: 0.0,
            factor: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    /// Whether the Gaussian factor is available for sampling.
    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }

    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.matrix.row(r).sum().abs())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Λ` for the chain `P` with stationary law `π`, truncated at `m0` powers.
///
/// The stationarity of `π` is checked first.
pub fn covariance_lambda(
    pi: &ProbabilityLaw,
    p: &TransitionMatrix,
    m0: usize,
) -> Result<CovarianceMatrix> {
    check_shapes(pi, p, m0)?;
    let residual = stationarity_residual(pi.values(), p);
    if residual > COVARIANCE_STATIONARY_TOL {
        return Err(Error::Calibration(format!(
            "π is not stationary for P (residual {residual:.3e})"
        )));
    }
    Ok(lambda_series(pi, p, m0))
}

pub(crate) fn check_shapes(pi: &ProbabilityLaw, p: &TransitionMatrix, m0: usize) -> Result<()> {
    if p.dim() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            found: p.dim(),
        });
    }
    if m0 == 0 {
        return Err(Error::Domain {
            name: "m0",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    Ok(())
}

/// The truncated series, symmetrized, with no stationarity check.
///
/// Powers are formed by repeated multiplication. Once successive powers
/// contract geometrically enough that the terms left before `m0` cannot move
/// any entry by more than [`SERIES_TAIL_TOL`], the remaining terms are added
/// in closed form using the last power.
pub(crate) fn lambda_series(
    pi: &ProbabilityLaw,
    p: &TransitionMatrix,
    m0: usize,
) -> CovarianceMatrix {
    let d = pi.len();
    let pv = pi.values();
    let p = p.as_matrix();

    let mut lambda = DMatrix::from_fn(d, d, |i, j| {
        pv[i] * (if i == j { 1.0 } else { 0.0 } - pv[j])
    });

    let lag_term = |power: &DMatrix<f64>| DMatrix::from_fn(d, d, |i, j| pv[i] * (power[(i, j)] - pv[j]));

    let mut sum = DMatrix::zeros(d, d);
    let mut power = p.clone();
    let mut prev_delta = f64::NAN;
    let mut terms_used = 0;
    for m in 1..=m0 {
        let term = lag_term(&power);
        sum += &term;
        terms_used = m;
        if m == m0 {
            break;
        }
        let next = &power * p;
        let delta = (&next - &power).amax();
        power = next;
        let remaining = (m0 - m) as f64;
        let tail = if delta == 0.0 {
            0.0
        } else if prev_delta.is_finite() && prev_delta > 0.0 {
            let rho = (delta / prev_delta).min(1.0 - 1e-9);
            delta / (1.0 - rho) * remaining
        } else {
            f64::INFINITY
        };
        prev_delta = delta;
        if tail < SERIES_TAIL_TOL {
            sum += lag_term(&power) * remaining;
            break;
        }
    }
    lambda += &sum + sum.transpose();
    let symmetric = (&lambda + lambda.transpose()) * 0.5;
    CovarianceMatrix {
        matrix: symmetric,
        m0,
        terms_used,
        psd_repaired: false,
        repair_distance: 0.0,
        factor: None,
    }
}

/// `V·sqrt(max(λ, 0))` from the eigendecomposition of a symmetric matrix.
fn clamped_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = SymmetricEigen::new(m.clone());
    let roots = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eigen.eigenvectors * DMatrix::from_diagonal(&roots)
}

impl CovarianceMatrix {
    /// Attach the Gaussian factor computed from the stored matrix. The
    /// factor depends only on the stored entries, so a matrix read back from
    /// disk yields the same draws as the one that was written.
    pub fn factored(mut self) -> Self {
        self.factor = Some(clamped_factor(&self.matrix));
        self
    }
}

/// Project onto the PSD cone by clamping negative eigenvalues to zero.
///
/// The Gaussian factor used by [`sample_wc_statistic`] is attached to the
/// result. Input that is already PSD keeps its entries.
pub fn psd_repair(lambda: &CovarianceMatrix) -> CovarianceMatrix {
    let symmetric = (&lambda.matrix + lambda.matrix.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(symmetric);
    let any_negative = eigen.eigenvalues.iter().any(|&v| v < 0.0);
    let (matrix, distance) = if any_negative {
        let clamped: DVector<f64> = eigen.eigenvalues.map(|v| v.max(0.0));
        let rebuilt = &eigen.eigenvectors
            * DMatrix::from_diagonal(&clamped)
            * eigen.eigenvectors.transpose();
        let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        let distance = (&rebuilt - &lambda.matrix).norm();
        (rebuilt, distance)
    } else {
        (lambda.matrix.clone(), 0.0)
    };
    CovarianceMatrix {
        matrix,
        m0: lambda.m0,
        terms_used: lambda.terms_used,
        psd_repaired: lambda.psd_repaired || any_negative,
        repair_distance: distance,
        factor: None,
    }
    .factored()
}

/// Sorted scalar samples defining an empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySequence);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Calibration("NaN in CDF samples".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// `F(x)`: fraction of samples `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.samples.len() as f64
    }

    /// Lowest sample with `F ≥ p`: the order statistic of rank `⌈pT⌉`
    /// (1-based), clamped to `[1, T]`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.samples[quantile_rank(p, self.samples.len()) - 1]
    }

    /// Every sample multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> EmpiricalCdf {
        EmpiricalCdf {
            samples: self.samples.iter().map(|v| v * factor).collect(),
        }
    }
}

/// 1-based rank `⌈p·T⌉` clamped to `[1, T]`; products within 1e-9 of an
/// integer are treated as that integer.
pub fn quantile_rank(p: f64, len: usize) -> usize {
    let raw = p * len as f64;
    let nearest = raw.round();
    let rank = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (rank.max(1.0) as usize).min(len)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Unscaled draws of `g' H g` with `g ~ N(0, Λ)`.
///
/// These do not depend on the window length, so one set serves every `n`:
/// the statistic for length `n` is the same draws divided by `2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFormSamples {
    cdf: EmpiricalCdf,
}

impl QuadraticFormSamples {
    pub fn draw(
        h: &HessianMatrix,
        lambda: &CovarianceMatrix,
        t_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if h.dim() != lambda.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                found: lambda.dim(),
            });
        }
        if t_samples < MIN_WC_SAMPLES {
            return Err(Error::Domain {
                name: "t_samples",
                value: t_samples as f64,
                domain: "[100, inf)",
            });
        }
        let factor = lambda.factor().ok_or(Error::NotPsd)?;
        let hm = h.as_matrix();
        let d = h.dim();
        let chunks = t_samples.div_ceil(GAUSSIAN_CHUNK);
        let samples: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = stream_rng(seed, c as u64);
                let count = GAUSSIAN_CHUNK.min(t_samples - c * GAUSSIAN_CHUNK);
                (0..count)
                    .map(|_| {
                        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                        let g = factor * z;
                        g.dot(&(hm * &g))
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        Ok(Self {
            cdf: EmpiricalCdf::new(samples)?,
        })
    }

    pub fn raw(&self) -> &EmpiricalCdf {
        &self.cdf
    }

    /// Empirical CDF of `(1/2n) g' H g`.
    pub fn for_length(&self, n: usize) -> EmpiricalCdf {
        EmpiricalCdf {
            samples: self
                .cdf
                .samples
                .iter()
                .map(|v| v / (2.0 * n as f64))
                .collect(),
        }
    }

    /// `η_wc` for length `n`; equal to `threshold_wc(&self.for_length(n), beta)`.
    pub fn threshold(&self, n: usize, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        if n == 0 {
            return Err(Error::Domain {
                name: "n",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        Ok(self.cdf.quantile(1.0 - beta) / (2.0 * n as f64))
    }
}

/// Sampled distribution of `(1/2n) g' H g`, `g ~ N(0, Λ)`.
///
/// `lambda` must come out of [`psd_repair`].
pub fn sample_wc_statistic(
    h: &HessianMatrix,
    lambda: &CovarianceMatrix,
    n: usize,
    t_samples: usize,
    seed: u64,
) -> Result<EmpiricalCdf> {
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    Ok(QuadraticFormSamples::draw(h, lambda, t_samples, seed)?.for_length(n))
}

/// `η_wc = F_em^{-1}(1 − β)`.
pub fn threshold_wc(cdf: &EmpiricalCdf, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if cdf.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(cdf.quantile(1.0 - beta))
}

/// `η_sv = −ln(β) / n`.
pub fn threshold_sanov(beta: f64, n: usize) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    Ok(-beta.ln() / n as f64)
}

/// Divergences `D(Γ_n ‖ π)` of `t_samples` independent stationary paths of
/// length `n`. Replica `r` uses its own stream derived from `seed`.
pub fn montecarlo_divergences(
    q: &TransitionMatrix,
    pi: &ProbabilityLaw,
    n: usize,
    t_samples: usize,
    seed: u64,
) -> Result<EmpiricalCdf> {
    if pi.n_states() != q.dim() {
        return Err(Error::AlphabetMismatch {
            expected: q.dim(),
            found: pi.n_states(),
        });
    }
    if n == 0 || t_samples == 0 {
        return Err(Error::Domain {
            name: if n == 0 { "n" } else { "t_samples" },
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    let sampler = ChainSampler::new(q, &InitialLaw::Stationary)?;
    let values = (0..t_samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let counts = sampler.sample_counts(n, &mut rng);
            divergence(&law_from_counts(q.dim(), &counts)?, pi)
        })
        .collect::<Result<Vec<f64>>>()?;
    EmpiricalCdf::new(values)
}

/// Ground-truth threshold from simulated chains, using the same rank
/// convention as [`threshold_wc`].
pub fn threshold_montecarlo(
    q: &TransitionMatrix,
    pi: &ProbabilityLaw,
    n: usize,
    t_samples: usize,
    beta: f64,
    seed: u64,
) -> Result<f64> {
    check_beta(beta)?;
    warn_sparse_tail(t_samples, beta);
    let cdf = montecarlo_divergences(q, pi, n, t_samples, seed)?;
    threshold_wc(&cdf, beta)
}

/// Warn, once per process and `(T, β)`, when `T·β < 5`.
pub(crate) fn warn_sparse_tail(t_samples: usize, beta: f64) {
    use std::collections::HashSet;
    use std::sync::Mutex;
    static SEEN: Mutex<Option<HashSet<(usize, u64)>>> = Mutex::new(None);
    if (t_samples as f64) * beta >= 5.0 {
        return;
    }
    let mut seen = SEEN.lock().unwrap_or_else(|e| e.into_inner());
    if seen.get_or_insert_with(HashSet::new).insert((t_samples, beta.to_bits())) {
        warn!(
            "T·β = {:.2} < 5: the (1-β) quantile rests on very few samples",
            t_samples as f64 * beta
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub n: usize,
    pub eta_sv: f64,
    pub eta_wc: f64,
    pub eta_mc: Option<f64>,
}

/// Thresholds per sample size for each calibration method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub beta: f64,
    pub t_samples: usize,
    pub seed: u64,
    pub points: Vec<ThresholdPoint>,
}

impl ThresholdCurve {
    /// CSV with columns `n,eta_sv,eta_wc,eta_mc`; `eta_mc` is empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,eta_sv,eta_wc,eta_mc\n");
        for p in &self.points {
            let mc = p.eta_mc.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", p.n, p.eta_sv, p.eta_wc, mc));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{lift_transition, stationary_law};
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn q_example() -> TransitionMatrix {
        TransitionMatrix::from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    fn stationary(q: &TransitionMatrix) -> (ProbabilityLaw, TransitionMatrix) {
        let p = lift_transition(q);
        (stationary_law(&p, 1000).unwrap().law, p)
    }

    #[test]
    fn hessian_uniform_cases() {
        let h = hessian_at(&ProbabilityLaw::uniform(2).unwrap()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a / 2 != b / 2 {
                    0.0
                } else if a == b {
                    2.0
                } else {
                    -2.0
                };
                assert_eq!(h.get(a, b), expected);
            }
        }
    }

    #[test]
    fn hessian_cross_row_zero_and_symmetric() {
        let mut rng = rng_from_seed(4);
        let w: Vec<f64> = (0..9).map(|_| rng.random::<f64>() + 0.01).collect();
        let pi = ProbabilityLaw::from_weights(w).unwrap();
        let h = hessian_at(&pi).unwrap();
        // (1,1) vs (2,1)
        assert_eq!(h.get(0, 3), 0.0);
        assert_eq!(h.as_matrix(), &h.as_matrix().transpose());
        let min_eig = SymmetricEigen::new(h.as_matrix().clone())
            .eigenvalues
            .min();
        assert!(min_eig > -1e-9);
    }

    #[test]
    fn hessian_rejects_zero_entry() {
        let pi = ProbabilityLaw::new(vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        assert!(matches!(hessian_at(&pi), Err(Error::SupportViolation(2))));
    }

    #[test]
    fn covariance_rows_sum_to_zero() {
        let (pi, p) = stationary(&q_example());
        let lambda = covariance_lambda(&pi, &p, 1000).unwrap();
        assert!(lambda.max_abs_row_sum() < 1e-8);
        assert!(lambda.terms_used < 1000);
        for k in 0..4 {
            assert!(lambda.get(k, k) >= 0.0);
        }
        assert_eq!(lambda.as_matrix(), &lambda.as_matrix().transpose());
    }

    #[test]
    fn covariance_early_stop_matches_full_sum() {
        let (pi, p) = stationary(&q_example());
        let fast = covariance_lambda(&pi, &p, 1000).unwrap();
        // Brute force: every power explicitly.
        let d = 4;
        let pv = pi.values();
        let mut full = DMatrix::from_fn(d, d, |i, j| pv[i] * (if i == j { 1.0 } else { 0.0 } - pv[j]));
        let mut power = p.as_matrix().clone();
        for _ in 1..=1000 {
            full += DMatrix::from_fn(d, d, |i, j| {
                pv[i] * (power[(i, j)] - pv[j]) + pv[j] * (power[(j, i)] - pv[i])
            });
            power = &power * p.as_matrix();
        }
        assert!((fast.as_matrix() - full).amax() < 1e-11);
    }

    #[test]
    fn covariance_of_iid_chain_is_multinomial() {
        // Uniform Q: Z_l and Z_{l+2} are independent, only lag 1 contributes.
        let (pi, p) = stationary(&TransitionMatrix::uniform(2));
        let lambda = covariance_lambda(&pi, &p, 1000).unwrap();
        assert!(lambda.terms_used <= 3);
        assert!(lambda.max_abs_row_sum() < 1e-15);
    }

    #[test]
    fn covariance_rejects_nonstationary_pi() {
        let (_, p) = stationary(&q_example());
        let pi = ProbabilityLaw::uniform(2).unwrap();
        assert!(matches!(
            covariance_lambda(&pi, &p, 1000),
            Err(Error::Calibration(_))
        ));
        let (pi, p) = stationary(&q_example());
        assert!(covariance_lambda(&pi, &p, 0).is_err());
        let p3 = lift_transition(&TransitionMatrix::uniform(3));
        assert!(matches!(
            covariance_lambda(&pi, &p3, 10),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psd_repair_identity_on_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cov = CovarianceMatrix::from_matrix(m.clone()).unwrap();
        let repaired = psd_repair(&cov);
        assert!(!repaired.psd_repaired);
        assert_eq!(repaired.repair_distance, 0.0);
        assert_eq!(repaired.as_matrix(), &m);
        assert!(repaired.is_factored());
    }

    #[test]
    fn psd_repair_clamps_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        let repaired = psd_repair(&CovarianceMatrix::from_matrix(m).unwrap());
        assert!(repaired.psd_repaired);
        assert!((repaired.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(repaired.get(1, 1).abs() < 1e-15);
        assert!((repaired.repair_distance - 1e-6).abs() < 1e-12);
        assert!(repaired.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn psd_repair_random_symmetric() {
        let mut rng = rng_from_seed(8);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() - 0.5);
        let sym = (&a + a.transpose()) * 0.5;
        let repaired = psd_repair(&CovarianceMatrix::from_matrix(sym).unwrap());
        assert!(repaired.min_eigenvalue() >= -1e-12);
        assert_eq!(repaired.as_matrix(), &repaired.as_matrix().transpose());
    }

    #[test]
    fn sampling_requires_repair() {
        let (pi, p) = stationary(&q_example());
        let lambda = covariance_lambda(&pi, &p, 1000).unwrap();
        let h = hessian_at(&pi).unwrap();
        assert!(matches!(
            sample_wc_statistic(&h, &lambda, 100, 1000, 1),
            Err(Error::NotPsd)
        ));
        let lambda = psd_repair(&lambda);
        assert!(sample_wc_statistic(&h, &lambda, 100, 99, 1).is_err());
        assert!(sample_wc_statistic(&h, &lambda, 100, 100, 1).is_ok());
    }

    #[test]
    fn zero_covariance_gives_zero_samples() {
        let h = hessian_at(&ProbabilityLaw::uniform(2).unwrap()).unwrap();
        let zero = psd_repair(&CovarianceMatrix::from_matrix(DMatrix::zeros(4, 4)).unwrap());
        let cdf = sample_wc_statistic(&h, &zero, 10, 500, 3).unwrap();
        assert!(cdf.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_n_halves_samples() {
        let (pi, p) = stationary(&q_example());
        let lambda = psd_repair(&covariance_lambda(&pi, &p, 1000).unwrap());
        let h = hessian_at(&pi).unwrap();
        let a = sample_wc_statistic(&h, &lambda, 300, 1000, 77).unwrap();
        let b = sample_wc_statistic(&h, &lambda, 600, 1000, 77).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(*y, x / 2.0);
        }
    }

    #[test]
    fn quadratic_form_mean_matches_trace() {
        for q in [TransitionMatrix::uniform(2), q_example()] {
            let (pi, p) = stationary(&q);
            let lambda = psd_repair(&covariance_lambda(&pi, &p, 1000).unwrap());
            let h = hessian_at(&pi).unwrap();
            let trace = (h.as_matrix() * lambda.as_matrix()).trace();
            let raw = QuadraticFormSamples::draw(&h, &lambda, 100_000, 9).unwrap();
            let s = raw.raw().samples();
            let mean = raw.raw().mean();
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
            let se = (var / s.len() as f64).sqrt();
            assert!((mean - trace).abs() < 3.0 * se, "{mean} vs {trace} (se {se})");
        }
    }

    #[test]
    fn quantile_conventions() {
        let cdf = EmpiricalCdf::new((1..=1000).map(f64::from).collect()).unwrap();
        assert_eq!(threshold_wc(&cdf, 0.001).unwrap(), 999.0);
        assert_eq!(threshold_wc(&cdf, 0.5).unwrap(), 500.0);
        assert_eq!(cdf.quantile(0.0), 1.0);
        assert_eq!(cdf.quantile(1.0), 1000.0);
        let constant = EmpiricalCdf::new(vec![3.5; 50]).unwrap();
        for beta in [0.001, 0.1, 0.9] {
            assert_eq!(threshold_wc(&constant, beta).unwrap(), 3.5);
        }
        assert!(threshold_wc(&cdf, 0.0).is_err());
        assert!(threshold_wc(&cdf, 1.0).is_err());
    }

    #[test]
    fn wc_threshold_monotone_in_beta() {
        let mut rng = rng_from_seed(5);
        let cdf = EmpiricalCdf::new((0..777).map(|_| rng.random::<f64>()).collect()).unwrap();
        let betas = [0.001, 0.01, 0.05, 0.1, 0.3, 0.5, 0.9];
        for w in betas.windows(2) {
            assert!(threshold_wc(&cdf, w[0]).unwrap() >= threshold_wc(&cdf, w[1]).unwrap());
        }
    }

    #[test]
    fn sanov_closed_form() {
        assert!((threshold_sanov(0.001, 1000).unwrap() - 6.907_755_278_982_137e-3).abs() < 1e-15);
        assert!((threshold_sanov((-1.0f64).exp(), 1).unwrap() - 1.0).abs() < 1e-15);
        for n in [10, 100, 1000] {
            assert_eq!(
                threshold_sanov(0.01, 2 * n).unwrap(),
                threshold_sanov(0.01, n).unwrap() / 2.0
            );
        }
        assert!(threshold_sanov(0.0, 10).is_err());
        assert!(threshold_sanov(0.5, 0).is_err());
    }

    #[test]
    fn montecarlo_deterministic_and_positive() {
        let (pi, _) = stationary(&q_example());
        let a = threshold_montecarlo(&q_example(), &pi, 200, 500, 0.01, 3).unwrap();
        let b = threshold_montecarlo(&q_example(), &pi, 200, 500, 0.01, 3).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn curve_csv_layout() {
        let curve = ThresholdCurve {
            beta: 0.01,
            t_samples: 10,
            seed: 1,
            points: vec![
                ThresholdPoint {
                    n: 10,
                    eta_sv: 0.5,
                    eta_wc: 0.25,
                    eta_mc: Some(0.3),
                },
                ThresholdPoint {
                    n: 20,
                    eta_sv: 0.25,
                    eta_wc: 0.125,
                    eta_mc: None,
                },
            ],
        };
        assert_eq!(
            curve.to_csv(),
            "n,eta_sv,eta_wc,eta_mc\n10,0.5,0.25,0.3\n20,0.25,0.125,\n"
        );
    }
}
