//! Estimating the calibration inputs `π̂`, `Q̂`, `P̂` and `Λ̂` from a single
//! training path.
//!
//! `π̂` comes from floored symbol frequencies, `Q̂` from row-normalizing `π̂`,
//! `P̂` by lifting `Q̂`, and `Λ̂` from the truncated covariance series followed
//! by symmetrization and PSD repair.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clt::{
    check_shapes, hessian_at, lambda_series, psd_repair, CovarianceMatrix, HessianMatrix,
    QuadraticFormSamples,
};
use crate::error::{Error, Result};
use crate::markov::{
    conditional_rows, lift_transition, ProbabilityLaw, SymbolSequence, TransitionMatrix,
    DEFAULT_FLOOR, DEFAULT_M0,
};

/// Version written into every serialized PL bundle.
pub const PL_SCHEMA_VERSION: u32 = 1;

/// How `Q̂` is obtained from the training path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QEstimator {
    /// Row-normalize the floored pair law `π̂`.
    #[default]
    StationaryLaw,
    /// Row-normalize raw transition counts; unvisited rows become uniform.
    TransitionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Floor on estimated pair frequencies.
    pub epsilon: f64,
    /// Truncation order of the covariance series.
    pub m0: usize,
    /// Suggested training length; `1000 · N²` when unset.
    pub n0: Option<usize>,
    pub q_estimator: QEstimator,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_FLOOR,
            m0: DEFAULT_M0,
            n0: None,
            q_estimator: QEstimator::StationaryLaw,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain {
                name: "epsilon",
                value: self.epsilon,
                domain: "(0, inf)",
            });
        }
        if self.m0 == 0 {
            return Err(Error::Domain {
                name: "m0",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        Ok(())
    }

    pub fn training_length(&self, n_states: usize) -> usize {
        self.n0.unwrap_or(1000 * n_states * n_states)
    }
}

/// `π̂_k = max(count_k / n, ε) / ŝ`.
pub fn estimate_pi(training: &SymbolSequence, cfg: &EstimationConfig) -> Result<ProbabilityLaw> {
    cfg.validate()?;
    if training.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = training.len() as f64;
    let floored = training
        .counts()
        .into_iter()
        .map(|c| (c as f64 / n).max(cfg.epsilon))
        .collect();
    ProbabilityLaw::from_weights(floored)
}

/// `q̂_ij = π̂_ij / Σ_t π̂_it`.
pub fn estimate_q(pi_hat: &ProbabilityLaw) -> Result<TransitionMatrix> {
    conditional_rows(pi_hat)
}

/// Transition-count estimate of `Q`, the non-default alternative.
pub fn estimate_q_from_transitions(training: &SymbolSequence) -> Result<TransitionMatrix> {
    if training.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = training.n_states();
    let counts = training.counts();
    let rows = (0..n)
        .map(|i| {
            let row = &counts[i * n..(i + 1) * n];
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / n as f64; n]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}

/// Truncated covariance series at `(π̂, P̂)`, symmetrized and PSD-repaired.
///
/// `π̂` is generally not exactly stationary for `P̂`, so no stationarity check
/// is applied here.
pub fn estimate_lambda(
    pi_hat: &ProbabilityLaw,
    p_hat: &TransitionMatrix,
    cfg: &EstimationConfig,
) -> Result<CovarianceMatrix> {
    cfg.validate()?;
    check_shapes(pi_hat, p_hat, cfg.m0)?;
    Ok(psd_repair(&lambda_series(pi_hat, p_hat, cfg.m0)))
}

/// Everything the detector needs to know about one reference probability law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlBundle {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n_states: usize,
    pub pi: ProbabilityLaw,
    pub q: TransitionMatrix,
    pub lambda: CovarianceMatrix,
    pub epsilon: f64,
    pub m0: usize,
    pub training_length: usize,
    /// Set when the training path was too short to trust.
    #[serde(default)]
    pub low_confidence: bool,
    /// Time interval `[start, end)` the PL was estimated on, if segmented.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[f64; 2]>,
}

impl PlBundle {
    pub fn hessian(&self) -> Result<HessianMatrix> {
        hessian_at(&self.pi)
    }

    /// Gaussian quadratic-form draws for this PL's `η_wc`.
    pub fn wc_samples(&self, t_samples: usize, seed: u64) -> Result<QuadraticFormSamples> {
        let lambda = if self.lambda.is_factored() {
            self.lambda.clone()
        } else {
            self.lambda.clone().factored()
        };
        QuadraticFormSamples::draw(&self.hessian()?, &lambda, t_samples, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PL_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported PL schema version {} (expected {PL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let n = self.n_states;
        if self.pi.n_states() != n || self.q.dim() != n || self.lambda.dim() != n * n {
            return Err(Error::Config(format!(
                "PL bundle shapes disagree with n_states = {n}"
            )));
        }
        if !self.pi.has_full_support() {
            return Err(Error::SupportViolation(
                self.pi.values().iter().position(|&v| v <= 0.0).unwrap_or(0) + 1,
            ));
        }
        Ok(())
    }
}

/// Training paths shorter than this produce a low-confidence PL.
pub const LOW_CONFIDENCE_LENGTH: usize = 100;

/// Run the whole estimation chain on one training path.
pub fn calibrate(training: &SymbolSequence, cfg: &EstimationConfig) -> Result<PlBundle> {
    let pi = estimate_pi(training, cfg)?;
    let q = match cfg.q_estimator {
        QEstimator::StationaryLaw => estimate_q(&pi)?,
        QEstimator::TransitionCounts => estimate_q_from_transitions(training)?,
    };
    let p = lift_transition(&q);
    let lambda = estimate_lambda(&pi, &p, cfg)?;
    let low_confidence = training.len() < LOW_CONFIDENCE_LENGTH;
    if low_confidence {
        warn!(
            "training path has only {} lifted symbols; PL marked low-confidence",
            training.len()
        );
    }
    Ok(PlBundle {
        schema_version: PL_SCHEMA_VERSION,
        label: None,
        n_states: training.n_states(),
        pi,
        q,
        lambda,
        epsilon: cfg.epsilon,
        m0: cfg.m0,
        training_length: training.len(),
        low_confidence,
        segment: None,
    })
}
