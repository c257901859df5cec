//! Mapping flows to symbols of a finite alphabet.
//!
//! Each flow contributes three features: duration, size, and the distance of
//! its source to the nearest user-cluster center. Each feature is cut into
//! equal-width bins over its training range (duration and size on a
//! `ln(1 + x)` scale, since both are heavy tailed), and the symbol is the
//! mixed-radix combination
//!
//! ```text
//! ((duration_bin · n2 + size_bin) · n3 + distance_bin) · k + cluster
//! ```

use std::collections::BTreeSet;

use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{source_point, FlowRecord};
use crate::error::{Error, Result};
use crate::markov::SymbolSequence;
use crate::rng::stream_rng;

const KMEANS_RESTARTS: u64 = 8;
const KMEANS_MAX_ITER: usize = 200;

/// Quantization levels `(n1, n2, n3)` for duration, size and distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerLevels {
    pub duration: usize,
    pub size: usize,
    pub distance: usize,
}

impl QuantizerLevels {
    pub fn new(duration: usize, size: usize, distance: usize) -> Self {
        Self {
            duration,
            size,
            distance,
        }
    }

    fn product(&self) -> usize {
        self.duration * self.size * self.distance
    }
}

/// Equal-width bins over `[lo, hi]`, optionally on a `ln(1 + x)` scale.
/// Values outside the range clamp to the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub lo: f64,
    pub hi: f64,
    pub levels: usize,
    pub log_scale: bool,
}

impl FeatureBins {
    fn fit(values: impl Iterator<Item = f64>, levels: usize, log_scale: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log_scale { v.ln_1p() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self {
            lo,
            hi,
            levels,
            log_scale,
        }
    }

    pub fn bin(&self, value: f64) -> usize {
        if self.levels <= 1 || !(self.hi > self.lo) {
            return 0;
        }
        let v = if self.log_scale { value.ln_1p() } else { value };
        let t = (v - self.lo) / (self.hi - self.lo) * self.levels as f64;
        if !(t > 0.0) {
            0
        } else {
            (t.floor() as usize).min(self.levels - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub levels: QuantizerLevels,
    /// Number of user clusters actually used.
    pub cluster_count: usize,
    pub cluster_centers: Vec<[f64; 2]>,
    pub duration_bins: FeatureBins,
    pub size_bins: FeatureBins,
    pub distance_bins: FeatureBins,
}

impl QuantizerSpec {
    /// Alphabet size `N = n1 · n2 · n3 · k`.
    pub fn n_states(&self) -> usize {
        self.levels.product() * self.cluster_count
    }

    /// Index of the nearest center and the distance to it.
    pub fn nearest_cluster(&self, src: &str) -> (usize, f64) {
        nearest(&self.cluster_centers, source_point(src))
    }

    /// Symbol in `0..N` for one flow.
    pub fn symbol(&self, flow: &FlowRecord) -> usize {
        let (cluster, dist) = self.nearest_cluster(&flow.src);
        let d = self.duration_bins.bin(flow.duration);
        let s = self.size_bins.bin(flow.size);
        let r = self.distance_bins.bin(dist);
        ((d * self.levels.size + s) * self.levels.distance + r) * self.cluster_count + cluster
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(centers: &[[f64; 2]], p: [f64; 2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centers.iter().enumerate() {
        let d = dist2(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Seeded k-means++ with Lloyd refinement and a few restarts. Centers are
/// returned in lexicographic order so cluster indices do not depend on the
/// restart that won.
fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = stream_rng(seed, restart);
        let mut centers = vec![points[rng.random_range(0..points.len())]];
        while centers.len() < k {
            let weights: Vec<f64> = points.iter().map(|&p| nearest(&centers, p).1.powi(2)).collect();
            let total: f64 = weights.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = points.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                points[pick]
            } else {
                points[centers.len() % points.len()]
            };
            centers.push(next);
        }
        for _ in 0..KMEANS_MAX_ITER {
            let mut sums = vec![[0.0, 0.0]; k];
            let mut counts = vec![0usize; k];
            for &p in points {
                let (c, _) = nearest(&centers, p);
                sums[c][0] += p[0];
                sums[c][1] += p[1];
                counts[c] += 1;
            }
            let mut updated = centers.clone();
            for c in 0..k {
                if counts[c] > 0 {
                    updated[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
                } else {
                    // Re-seed an empty cluster at the worst-served point.
                    let far = points
                        .iter()
                        .copied()
                        .max_by(|&a, &b| nearest(&centers, a).1.total_cmp(&nearest(&centers, b).1))
                        .unwrap_or(centers[c]);
                    updated[c] = far;
                }
            }
            let done = updated == centers;
            centers = updated;
            if done {
                break;
            }
        }
        let inertia: f64 = points.iter().map(|&p| nearest(&centers, p).1.powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centers));
        }
    }
    let mut centers = best.map(|(_, c)| c).unwrap_or_default();
    centers.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    centers
}

/// Fit a quantizer on training traffic.
pub fn build_quantizer(
    training: &[FlowRecord],
    levels: QuantizerLevels,
    k: usize,
    seed: u64,
) -> Result<QuantizerSpec> {
    if training.is_empty() {
        return Err(Error::EmptyTraffic);
    }
    if levels.duration == 0 || levels.size == 0 || levels.distance == 0 || k == 0 {
        return Err(Error::Config(
            "quantization levels and cluster count must be at least 1".into(),
        ));
    }
    if levels.product() * k < 2 {
        return Err(Error::Config(format!(
            "alphabet size {} is too small; the test needs N ≥ 2",
            levels.product() * k
        )));
    }
    let sources: BTreeSet<&str> = training.iter().map(|f| f.src.as_str()).collect();
    let mut points: Vec<[f64; 2]> = sources.iter().map(|s| source_point(s)).collect();
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    points.dedup();
    let k = if k > points.len() {
        warn!(
            "requested {k} clusters but only {} distinct sources; using {}",
            points.len(),
            points.len()
        );
        points.len()
    } else {
        k
    };
    if levels.product() * k < 2 {
        return Err(Error::Config(format!(
            "alphabet size {} after reducing clusters is too small",
            levels.product() * k
        )));
    }
    let centers = kmeans(&points, k, seed);
    let distances: Vec<f64> = points.iter().map(|&p| nearest(&centers, p).1).collect();
    Ok(QuantizerSpec {
        levels,
        cluster_count: k,
        duration_bins: FeatureBins::fit(training.iter().map(|f| f.duration), levels.duration, true),
        size_bins: FeatureBins::fit(training.iter().map(|f| f.size), levels.size, true),
        distance_bins: FeatureBins::fit(distances.into_iter(), levels.distance, false),
        cluster_centers: centers,
    })
}

/// Per-flow symbols over `Ξ` and the lifted pair sequence over `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFlows {
    pub states: Vec<usize>,
    pub lifted: SymbolSequence,
}

/// Quantize flows (assumed time-ordered) and pair consecutive symbols.
/// `m` flows give `m − 1` lifted symbols.
pub fn quantize(flows: &[FlowRecord], spec: &QuantizerSpec) -> Result<QuantizedFlows> {
    let states: Vec<usize> = flows.iter().map(|f| spec.symbol(f)).collect();
    let lifted = SymbolSequence::lift_states(spec.n_states(), &states)?;
    Ok(QuantizedFlows { states, lifted })
}
