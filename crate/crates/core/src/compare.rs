//! Threshold comparison experiment: for a random chain, compute `η_sv`, `η_wc`
//! (from estimated parameters) and the simulated `η_mc` over a grid of
//! sample sizes.

use log::info;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clt::{threshold_montecarlo, threshold_sanov, ThresholdCurve, ThresholdPoint};
use crate::error::{Error, Result};
use crate::estimation::{calibrate, EstimationConfig};
use crate::markov::{
    lift_transition, sample_chain, stationary_law, Alphabet, InitialLaw, ProbabilityLaw,
    TransitionMatrix, DEFAULT_FLOOR, DEFAULT_M0,
};
use crate::rng::{derive_seed, stream_rng};

const STREAM_Q: u64 = 0;
const STREAM_TRAINING: u64 = 1;
const STREAM_GAUSSIAN: u64 = 2;
const STREAM_MC_BASE: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdCompareConfig {
    /// Size `N` of the original alphabet.
    pub n_states: usize,
    pub beta: f64,
    /// Gaussian draws behind `η_wc`.
    #[serde(rename = "T")]
    pub t_samples: usize,
    /// Simulated chains per grid point for `η_mc`; defaults to `T`.
    pub t_montecarlo: Option<usize>,
    pub m0: usize,
    pub epsilon: f64,
    /// Training length; `1000 · N²` when unset.
    pub n0: Option<usize>,
    pub n_grid: Vec<usize>,
    pub seed: u64,
}

impl Default for ThresholdCompareConfig {
    fn default() -> Self {
        Self {
            n_states: 12,
            beta: 0.001,
            t_samples: 1000,
            t_montecarlo: None,
            m0: DEFAULT_M0,
            epsilon: DEFAULT_FLOOR,
            n0: None,
            n_grid: vec![500, 1000, 1500, 2000, 3000, 4000, 5000, 6500, 8000, 10_000],
            seed: 2017,
        }
    }
}

impl ThresholdCompareConfig {
    pub fn validate(&self) -> Result<()> {
        Alphabet::new(self.n_states)?;
        if self.n_grid.is_empty() {
            return Err(Error::Config("n-grid is empty".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("grid point n = {n} is below 2")));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Domain {
                name: "beta",
                value: self.beta,
                domain: "(0, 1)",
            });
        }
        self.estimation().validate()
    }

    fn estimation(&self) -> EstimationConfig {
        EstimationConfig {
            epsilon: self.epsilon,
            m0: self.m0,
            n0: self.n0,
            ..Default::default()
        }
    }
}

/// Relative errors of the two approximations against `η_mc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub wc_max_rel: f64,
    pub wc_mean_rel: f64,
    pub sv_max_rel: f64,
    pub sv_mean_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub q: TransitionMatrix,
    pub pi: ProbabilityLaw,
    pub curve: ThresholdCurve,
    pub summary: ErrorSummary,
}

/// Random strictly positive `N × N` transition matrix with uniform weights.
pub fn random_transition_matrix(n_states: usize, seed: u64) -> Result<TransitionMatrix> {
    Alphabet::new(n_states)?;
    let mut rng = stream_rng(seed, STREAM_Q);
    let rows = (0..n_states)
        .map(|_| {
            let w: Vec<f64> = (0..n_states)
                .map(|_| rng.random::<f64>().max(f64::EPSILON))
                .collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}

pub fn run_threshold_compare(cfg: &ThresholdCompareConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let est = cfg.estimation();
    let q = random_transition_matrix(cfg.n_states, cfg.seed)?;
    let p = lift_transition(&q);
    let pi = stationary_law(&p, cfg.m0)?.law;

    let n0 = est.training_length(cfg.n_states);
    let training = sample_chain(
        &q,
        n0,
        derive_seed(cfg.seed, STREAM_TRAINING),
        &InitialLaw::Stationary,
    )?;
    let bundle = calibrate(&training, &est)?;
    info!(
        "estimated parameters from {n0} symbols; Λ̂ used {} powers",
        bundle.lambda.terms_used
    );
    let wc = bundle.wc_samples(cfg.t_samples, derive_seed(cfg.seed, STREAM_GAUSSIAN))?;

    let t_mc = cfg.t_montecarlo.unwrap_or(cfg.t_samples);
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for (idx, &n) in cfg.n_grid.iter().enumerate() {
        let mc_seed = derive_seed(cfg.seed, STREAM_MC_BASE + idx as u64);
        let point = ThresholdPoint {
            n,
            eta_sv: threshold_sanov(cfg.beta, n)?,
            eta_wc: wc.threshold(n, cfg.beta)?,
            eta_mc: Some(threshold_montecarlo(&q, &pi, n, t_mc, cfg.beta, mc_seed)?),
        };
        info!(
            "n = {n}: sv {:.5} wc {:.5} mc {:.5}",
            point.eta_sv,
            point.eta_wc,
            point.eta_mc.unwrap_or(f64::NAN)
        );
        points.push(point);
    }
    let summary = summarize(&points);
    Ok(CompareReport {
        q,
        pi,
        curve: ThresholdCurve {
            beta: cfg.beta,
            t_samples: cfg.t_samples,
            seed: cfg.seed,
            points,
        },
        summary,
    })
}

fn summarize(points: &[ThresholdPoint]) -> ErrorSummary {
    let rel = |f: fn(&ThresholdPoint) -> f64| -> Vec<f64> {
        points
            .iter()
            .filter_map(|p| p.eta_mc.map(|mc| (f(p) - mc).abs() / mc))
            .collect()
    };
    let wc = rel(|p| p.eta_wc);
    let sv = rel(|p| p.eta_sv);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    ErrorSummary {
        wc_max_rel: max(&wc),
        wc_mean_rel: mean(&wc),
        sv_max_rel: max(&sv),
        sv_mean_rel: mean(&sv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn random_q_is_valid_and_seeded() {
        let a = random_transition_matrix(5, 3).unwrap();
        a.ensure_strictly_positive().unwrap();
        assert_eq!(a, random_transition_matrix(5, 3).unwrap());
        assert_ne!(a, random_transition_matrix(5, 4).unwrap());
    }

    #[test]
    fn rejects_infeasible_grid() {
        let cfg = ThresholdCompareConfig {
            n_grid: vec![100, 1],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn small_smoke_run() {
        let cfg = ThresholdCompareConfig {
            n_states: 2,
            n_grid: vec![100, 1000],
            ..Default::default()
        };
        let start = Instant::now();
        let a = run_threshold_compare(&cfg).unwrap();
        assert!(start.elapsed().as_secs_f64() < 10.0);
        let b = run_threshold_compare(&cfg).unwrap();
        assert_eq!(a.curve.to_csv(), b.curve.to_csv());
        for p in &a.curve.points {
            assert!(p.eta_sv > 0.0 && p.eta_wc > 0.0 && p.eta_mc.unwrap() > 0.0);
        }
        assert!(a.curve.points[0].eta_sv > a.curve.points[1].eta_sv);
    }

    #[test]
    fn config_json_uses_flag_names() {
        let cfg: ThresholdCompareConfig =
            serde_json::from_str(r#"{"n_states": 3, "T": 500, "n_grid": [10, 20]}"#).unwrap();
        assert_eq!(cfg.t_samples, 500);
        assert_eq!(cfg.beta, 0.001);
    }
}
