//! Experiment recipes: one JSON file bundling the settings of a run.
//!
//! Every section is optional; a subcommand reads the sections it needs and
//! command-line flags override individual fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compare::ThresholdCompareConfig;
use crate::error::{Error, Result};
use crate::estimation::{EstimationConfig, PlBundle};
use crate::flow::{
    build_quantizer, calibrate_from_reference, detect, DetectionConfig, FlowRecord,
    QuantizerLevels, QuantizerSpec, WindowReport,
};
use crate::traffic::{generate, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerRecipe {
    pub levels: QuantizerLevels,
    pub clusters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for QuantizerRecipe {
    fn default() -> Self {
        Self {
            levels: QuantizerLevels::new(1, 2, 2),
            clusters: 3,
            seed: 0,
        }
    }
}

/// Where the reference PLs come from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The observed traffic itself, anomalies included.
    #[default]
    Observed,
    /// The same scenario without its anomaly, generated from another seed.
    Clean { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recipe {
    pub scenario: Option<ScenarioConfig>,
    pub quantizer: Option<QuantizerRecipe>,
    pub estimation: Option<EstimationConfig>,
    pub detection: Option<DetectionConfig>,
    pub reference: ReferenceMode,
    /// Time intervals of the reference, one PL each; one PL overall if unset.
    pub segments: Option<Vec<[f64; 2]>>,
    pub threshold_compare: Option<ThresholdCompareConfig>,
}

/// Everything produced by a detection run.
#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub quantizer: QuantizerSpec,
    pub pls: Vec<PlBundle>,
    pub reports: Vec<WindowReport>,
}

impl Recipe {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn scenario(&self) -> Result<&ScenarioConfig> {
        self.scenario
            .as_ref()
            .ok_or_else(|| Error::Config("recipe has no `scenario` section".into()))
    }

    /// Simulated observed traffic.
    pub fn observed_flows(&self) -> Result<Vec<FlowRecord>> {
        generate(self.scenario()?)
    }

    /// Reference traffic for calibration, given the observed traffic.
    pub fn reference_flows(&self, observed: &[FlowRecord]) -> Result<Vec<FlowRecord>> {
        match self.reference {
            ReferenceMode::Observed => Ok(observed.to_vec()),
            ReferenceMode::Clean { seed } => {
                let mut cfg = self.scenario()?.clone();
                cfg.anomaly = None;
                cfg.seed = seed;
                generate(&cfg)
            }
        }
    }

    /// Fit the quantizer and the reference PLs.
    pub fn calibrate(&self, reference: &[FlowRecord]) -> Result<(QuantizerSpec, Vec<PlBundle>)> {
        let q = self.quantizer.unwrap_or_default();
        let spec = build_quantizer(reference, q.levels, q.clusters, q.seed)?;
        let est = self.estimation.clone().unwrap_or_default();
        let pls = calibrate_from_reference(reference, &spec, &est, self.segments.as_deref())?;
        Ok((spec, pls))
    }

    /// Calibrate on the reference and run the windowed test on `observed`.
    pub fn run_detection(&self, observed: &[FlowRecord]) -> Result<DetectionRun> {
        let reference = self.reference_flows(observed)?;
        let (quantizer, pls) = self.calibrate(&reference)?;
        let cfg = self.detection.clone().unwrap_or_default();
        let reports = detect(observed, &quantizer, &cfg, &pls)?;
        Ok(DetectionRun {
            quantizer,
            pls,
            reports,
        })
    }
}
