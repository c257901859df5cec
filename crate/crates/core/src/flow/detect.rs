//! Sliding-window detection over quantized traffic.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantizer::{quantize, QuantizerSpec};
use super::FlowRecord;
use crate::clt::{threshold_sanov, QuadraticFormSamples};
use crate::error::{Error, Result};
use crate::estimation::{calibrate, EstimationConfig, PlBundle, PL_SCHEMA_VERSION};
use crate::markov::{divergence, empirical_pl, hoeffding_decide, SymbolSequence};
use crate::rng::derive_seed;

/// How the per-window threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    /// Weak-convergence threshold from the Gaussian quadratic form.
    Wc,
    /// `−ln β / n`.
    Sanov,
    /// A constant supplied by the user.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub window_size_s: f64,
    pub stride_s: f64,
    pub beta: f64,
    pub threshold_method: ThresholdMethod,
    /// Gaussian draws per PL for the weak-convergence threshold.
    pub t_samples: usize,
    pub seed: u64,
    /// End of the observation period; defaults to the last flow start.
    pub horizon_s: Option<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window_size_s: 400.0,
            stride_s: 50.0,
            beta: 0.001,
            threshold_method: ThresholdMethod::Wc,
            t_samples: 10_000,
            seed: 0,
            horizon_s: None,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_size_s > 0.0) || !self.window_size_s.is_finite() {
            return Err(Error::Config(format!(
                "window size must be positive, got {}",
                self.window_size_s
            )));
        }
        if !(self.stride_s > 0.0 && self.stride_s <= self.window_size_s) {
            return Err(Error::Config(format!(
                "stride must lie in (0, window size], got {}",
                self.stride_s
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Domain {
                name: "beta",
                value: self.beta,
                domain: "(0, 1)",
            });
        }
        if let ThresholdMethod::Fixed(v) = self.threshold_method {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("fixed threshold {v} must be ≥ 0")));
            }
        }
        Ok(())
    }

    /// Window start times: `i · stride` for every window that fits before
    /// the horizon. A horizon shorter than one window yields a single window.
    pub fn window_starts(&self, horizon: f64) -> Vec<f64> {
        let mut starts = Vec::new();
        let mut i = 0u64;
        loop {
            let start = i as f64 * self.stride_s;
            if start + self.window_size_s > horizon + 1e-9 {
                break;
            }
            starts.push(start);
            i += 1;
        }
        if starts.is_empty() {
            starts.push(0.0);
        }
        starts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Normal,
    Anomaly,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start: f64,
    pub window_end: f64,
    pub n_flows: usize,
    /// Lifted symbols in the window (one fewer than flows).
    pub n_pairs: usize,
    pub divergence: Option<f64>,
    /// Index of the PL closest to the window's empirical law.
    pub best_pl: Option<usize>,
    pub threshold: Option<f64>,
    pub status: WindowStatus,
    pub is_anomaly: bool,
}

/// Reference PLs with their thresholds prepared for repeated use.
pub struct Detector<'a> {
    spec: &'a QuantizerSpec,
    cfg: &'a DetectionConfig,
    pls: &'a [PlBundle],
    wc: Vec<QuadraticFormSamples>,
}

impl<'a> Detector<'a> {
    pub fn new(
        spec: &'a QuantizerSpec,
        cfg: &'a DetectionConfig,
        pls: &'a [PlBundle],
    ) -> Result<Self> {
        cfg.validate()?;
        if pls.is_empty() {
            return Err(Error::Config("no reference PLs supplied".into()));
        }
        for pl in pls {
            pl.validate()?;
            if pl.n_states != spec.n_states() {
                return Err(Error::AlphabetMismatch {
                    expected: spec.n_states(),
                    found: pl.n_states,
                });
            }
        }
        let wc = if cfg.threshold_method == ThresholdMethod::Wc {
            pls.iter()
                .enumerate()
                .map(|(i, pl)| pl.wc_samples(cfg.t_samples, derive_seed(cfg.seed, i as u64)))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { spec, cfg, pls, wc })
    }

    /// Threshold for a window of `n` lifted symbols, judged against PL `pl`.
    pub fn threshold(&self, pl: usize, n: usize) -> Result<f64> {
        match self.cfg.threshold_method {
            ThresholdMethod::Wc => self.wc[pl].threshold(n, self.cfg.beta),
            ThresholdMethod::Sanov => threshold_sanov(self.cfg.beta, n),
            ThresholdMethod::Fixed(v) => Ok(v),
        }
    }

    /// Smallest divergence over the PLs and its index (first on ties).
    pub fn closest_pl(&self, lifted: &SymbolSequence) -> Result<(usize, f64)> {
        let gamma = empirical_pl(lifted)?;
        let mut best = (0, f64::INFINITY);
        for (i, pl) in self.pls.iter().enumerate() {
            let d = divergence(&gamma, &pl.pi)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    pub fn run(&self, flows: &[FlowRecord]) -> Result<Vec<WindowReport>> {
        if flows.is_empty() {
            return Err(Error::EmptyTraffic);
        }
        let sorted;
        let flows = if flows.windows(2).all(|w| w[0].start_time <= w[1].start_time) {
            flows
        } else {
            let mut copy = flows.to_vec();
            super::sort_flows(&mut copy);
            sorted = copy;
            &sorted[..]
        };
        let states = quantize(flows, self.spec)?.states;
        let horizon = self
            .cfg
            .horizon_s
            .unwrap_or_else(|| flows.last().map(|f| f.start_time).unwrap_or(0.0));
        let starts = self.cfg.window_starts(horizon);
        let n_states = self.spec.n_states();
        let reports = starts
            .par_iter()
            .map(|&start| {
                let end = start + self.cfg.window_size_s;
                let lo = flows.partition_point(|f| f.start_time < start);
                let hi = flows.partition_point(|f| f.start_time < end);
                let n_flows = hi - lo;
                let mut report = WindowReport {
                    window_start: start,
                    window_end: end,
                    n_flows,
                    n_pairs: n_flows.saturating_sub(1),
                    divergence: None,
                    best_pl: None,
                    threshold: None,
                    status: WindowStatus::InsufficientData,
                    is_anomaly: false,
                };
                if n_flows < 2 {
                    return Ok(report);
                }
                let lifted = SymbolSequence::lift_states(n_states, &states[lo..hi])?;
                let (best, d) = self.closest_pl(&lifted)?;
                let eta = self.threshold(best, lifted.len())?;
                let alarm = hoeffding_decide(d, eta);
                report.divergence = Some(d);
                report.best_pl = Some(best);
                report.threshold = Some(eta);
                report.is_anomaly = alarm;
                report.status = if alarm {
                    WindowStatus::Anomaly
                } else {
                    WindowStatus::Normal
                };
                Ok(report)
            })
            .collect::<Result<Vec<_>>>()?;
        let insufficient = reports
            .iter()
            .filter(|r| r.status == WindowStatus::InsufficientData)
            .count();
        if insufficient > 0 {
            warn!("{insufficient} windows had fewer than 2 flows");
        }
        info!(
            "{} windows, {} flagged",
            reports.len(),
            reports.iter().filter(|r| r.is_anomaly).count()
        );
        Ok(reports)
    }
}

/// Run the windowed test over `flows` against the reference PLs.
pub fn detect(
    flows: &[FlowRecord],
    spec: &QuantizerSpec,
    cfg: &DetectionConfig,
    pls: &[PlBundle],
) -> Result<Vec<WindowReport>> {
    Detector::new(spec, cfg, pls)?.run(flows)
}

/// Estimate reference PLs from anomaly-free traffic.
///
/// With `segments = None` the whole reference yields one PL. Otherwise each
/// `[start, end)` interval yields its own PL; an empty list is an error.
pub fn calibrate_from_reference(
    reference: &[FlowRecord],
    spec: &QuantizerSpec,
    est: &EstimationConfig,
    segments: Option<&[[f64; 2]]>,
) -> Result<Vec<PlBundle>> {
    if reference.is_empty() {
        return Err(Error::EmptyTraffic);
    }
    let quantized = quantize(reference, spec)?;
    let Some(segments) = segments else {
        let mut pl = calibrate(&quantized.lifted, est)?;
        pl.label = Some("reference".into());
        return Ok(vec![pl]);
    };
    if segments.is_empty() {
        return Err(Error::Config("segmentation has no segments".into()));
    }
    segments
        .iter()
        .enumerate()
        .map(|(i, &[a, b])| {
            if !(a < b) {
                return Err(Error::Config(format!("segment {i} has start {a} ≥ end {b}")));
            }
            let lo = reference.partition_point(|f| f.start_time < a);
            let hi = reference.partition_point(|f| f.start_time < b);
            if hi - lo < 2 {
                return Err(Error::InsufficientData(format!(
                    "segment [{a}, {b}) holds {} flows",
                    hi - lo
                )));
            }
            let lifted = SymbolSequence::lift_states(spec.n_states(), &quantized.states[lo..hi])?;
            let mut pl = calibrate(&lifted, est)?;
            pl.label = Some(format!("segment-{i}"));
            pl.segment = Some([a, b]);
            Ok(pl)
        })
        .collect()
}

/// Persisted calibration: the quantizer plus one or more PLs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlFile {
    pub schema_version: u32,
    pub quantizer: Option<QuantizerSpec>,
    pub pls: Vec<PlBundle>,
}

impl PlFile {
    pub fn new(quantizer: Option<QuantizerSpec>, pls: Vec<PlBundle>) -> Self {
        Self {
            schema_version: PL_SCHEMA_VERSION,
            quantizer,
            pls,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PL_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported PL file schema version {}",
                self.schema_version
            )));
        }
        if self.pls.is_empty() {
            return Err(Error::Config("PL file holds no PLs".into()));
        }
        for pl in &self.pls {
            pl.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: Self = crate::io::read_json(path)?;
        file.validate()?;
        Ok(file)
    }
}

pub fn reports_to_jsonl(reports: &[WindowReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// `window_start,divergence,threshold,is_anomaly`; missing values are empty.
pub fn reports_to_summary_csv(reports: &[WindowReport]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("window_start,divergence,threshold,is_anomaly\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.window_start,
            opt(r.divergence),
            opt(r.threshold),
            r.is_anomaly
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_quantizer, QuantizerLevels};

    fn stream(n: usize, period: f64) -> Vec<FlowRecord> {
        let srcs = ["10.0.1.1", "10.0.1.2", "10.0.9.1"];
        (0..n)
            .map(|i| FlowRecord {
                start_time: i as f64 * period,
                duration: 1.0 + (i * 7 % 5) as f64,
                size: 100.0 * (1 + (i * 3) % 11) as f64,
                src: srcs[(i * 5 / 3) % 3].into(),
            })
            .collect()
    }

    #[test]
    fn window_grid() {
        let cfg = DetectionConfig::default();
        let starts = cfg.window_starts(1000.0);
        assert_eq!(starts.first(), Some(&0.0));
        assert_eq!(starts.last(), Some(&600.0));
        assert_eq!(starts.len(), 13);
        assert_eq!(cfg.window_starts(100.0), vec![0.0]);
    }

    #[test]
    fn config_checks() {
        let bad = DetectionConfig {
            stride_s: 500.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg: DetectionConfig =
            serde_json::from_str(r#"{"threshold_method": {"fixed": 0.5}}"#).unwrap();
        assert_eq!(cfg.threshold_method, ThresholdMethod::Fixed(0.5));
        let cfg: DetectionConfig = serde_json::from_str(r#"{"threshold_method": "sanov"}"#).unwrap();
        assert_eq!(cfg.threshold_method, ThresholdMethod::Sanov);
    }

    #[test]
    fn infinite_threshold_never_alarms() {
        let flows = stream(2000, 1.0);
        let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 1), 2, 0).unwrap();
        let pls =
            calibrate_from_reference(&flows, &spec, &EstimationConfig::default(), None).unwrap();
        let cfg = DetectionConfig {
            threshold_method: ThresholdMethod::Fixed(f64::INFINITY),
            ..Default::default()
        };
        let reports = detect(&flows, &spec, &cfg, &pls).unwrap();
        assert!(!reports.is_empty());
        assert!(reports.iter().all(|r| !r.is_anomaly));
    }

    #[test]
    fn sparse_windows_are_marked() {
        let mut flows = stream(200, 1.0);
        flows.push(FlowRecord {
            start_time: 5000.0,
            duration: 1.0,
            size: 100.0,
            src: "10.0.1.1".into(),
        });
        let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 1), 2, 0).unwrap();
        let pls =
            calibrate_from_reference(&flows, &spec, &EstimationConfig::default(), None).unwrap();
        let cfg = DetectionConfig {
            threshold_method: ThresholdMethod::Sanov,
            ..Default::default()
        };
        let reports = detect(&flows, &spec, &cfg, &pls).unwrap();
        let last = reports.last().unwrap();
        assert_eq!(last.status, WindowStatus::InsufficientData);
        assert!(!last.is_anomaly && last.divergence.is_none());
        let csv = reports_to_summary_csv(&reports);
        assert!(csv.starts_with("window_start,divergence,threshold,is_anomaly\n"));
        assert_eq!(csv.lines().count(), reports.len() + 1);
        assert_eq!(reports_to_jsonl(&reports).unwrap().lines().count(), reports.len());
    }

    #[test]
    fn rejects_mismatched_pl() {
        let flows = stream(500, 1.0);
        let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 1), 2, 0).unwrap();
        let other = build_quantizer(&flows, QuantizerLevels::new(1, 2, 2), 2, 0).unwrap();
        let pls =
            calibrate_from_reference(&flows, &other, &EstimationConfig::default(), None).unwrap();
        let err = detect(&flows, &spec, &DetectionConfig::default(), &pls).unwrap_err();
        assert!(matches!(err, Error::AlphabetMismatch { .. }));
        assert!(detect(&[], &spec, &DetectionConfig::default(), &pls).is_err());
    }

    #[test]
    fn segments() {
        let flows = stream(1000, 1.0);
        let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 1), 2, 0).unwrap();
        let est = EstimationConfig::default();
        assert!(calibrate_from_reference(&flows, &spec, &est, Some(&[])).is_err());
        let pls =
            calibrate_from_reference(&flows, &spec, &est, Some(&[[0.0, 500.0], [500.0, 1000.0]]))
                .unwrap();
        assert_eq!(pls.len(), 2);
        assert_eq!(pls[1].segment, Some([500.0, 1000.0]));
        let small =
            calibrate_from_reference(&flows, &spec, &est, Some(&[[0.0, 50.0]])).unwrap();
        assert!(small[0].low_confidence);
    }

    #[test]
    fn generalized_test_picks_closest_pl() {
        let flows = stream(1000, 1.0);
        let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 1), 2, 0).unwrap();
        let est = EstimationConfig::default();
        let pls = calibrate_from_reference(&flows, &spec, &est, None).unwrap();
        let cfg = DetectionConfig {
            threshold_method: ThresholdMethod::Sanov,
            ..Default::default()
        };
        let single = detect(&flows, &spec, &cfg, &pls).unwrap();
        let mut many = pls.clone();
        many.push(pls[0].clone());
        let double = detect(&flows, &spec, &cfg, &many).unwrap();
        for (a, b) in single.iter().zip(&double) {
            assert_eq!(a.divergence, b.divergence);
            assert_eq!(b.best_pl, Some(0));
        }
    }
}
