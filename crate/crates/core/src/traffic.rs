//! Synthetic flow traffic: per-user Poisson arrivals with log-normal sizes,
//! exponential durations, an optional sinusoidal day/night intensity and an
//! optional injected anomaly.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{sort_flows, FlowRecord};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub address: String,
    /// Flows per second; falls back to the scenario-wide rate.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Log-normal location of this user's sizes; falls back to the scenario's.
    #[serde(default)]
    pub size_mu: Option<f64>,
    /// Shift of this user's diurnal cycle, in seconds.
    #[serde(default)]
    pub phase_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalSpec {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    /// Index into the user list.
    pub user: usize,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default = "one")]
    pub rate_multiplier: f64,
    #[serde(default = "one")]
    pub size_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl AnomalySpec {
    fn active(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// Intensity factor `1 + amplitude · sin(2π (t + phase) / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalSpec {
    pub period_s: f64,
    pub amplitude: f64,
}

impl DiurnalSpec {
    fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * t / self.period_s).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon_s: f64,
    /// Default per-user arrival rate, flows per second.
    pub rate: f64,
    pub size: LogNormalSpec,
    /// Rate of the exponential duration law (1 / mean seconds).
    pub duration_rate: f64,
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub anomaly: Option<AnomalySpec>,
    #[serde(default)]
    pub diurnal: Option<DiurnalSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain {
                    name,
                    value: v,
                    domain: "(0, ∞)",
                })
            }
        };
        positive("horizon_s", self.horizon_s)?;
        positive("rate", self.rate)?;
        positive("duration_rate", self.duration_rate)?;
        positive("size.sigma", self.size.sigma)?;
        if self.users.is_empty() {
            return Err(Error::Config("scenario has no users".into()));
        }
        for u in &self.users {
            if let Some(r) = u.rate {
                positive("user rate", r)?;
            }
        }
        if let Some(a) = &self.anomaly {
            if a.user >= self.users.len() {
                return Err(Error::Config(format!(
                    "anomalous user {} does not exist ({} users)",
                    a.user,
                    self.users.len()
                )));
            }
            if !(0.0 <= a.start_s && a.start_s < a.end_s && a.end_s <= self.horizon_s) {
                return Err(Error::Config(format!(
                    "anomaly interval [{}, {}) is not inside [0, {}]",
                    a.start_s, a.end_s, self.horizon_s
                )));
            }
            positive("rate_multiplier", a.rate_multiplier)?;
            positive("size_multiplier", a.size_multiplier)?;
        }
        if let Some(d) = &self.diurnal {
            positive("diurnal.period_s", d.period_s)?;
            if !(0.0..1.0).contains(&d.amplitude) {
                return Err(Error::Domain {
                    name: "diurnal.amplitude",
                    value: d.amplitude,
                    domain: "[0, 1)",
                });
            }
        }
        Ok(())
    }

    fn user_rate(&self, u: usize) -> f64 {
        self.users[u].rate.unwrap_or(self.rate)
    }

    /// Arrival intensity of user `u` at time `t`.
    pub fn intensity(&self, u: usize, t: f64) -> f64 {
        let mut r = self.user_rate(u);
        if let Some(d) = &self.diurnal {
            r *= d.factor(t + self.users[u].phase_s);
        }
        if let Some(a) = &self.anomaly {
            if a.user == u && a.active(t) {
                r *= a.rate_multiplier;
            }
        }
        r
    }

    fn intensity_bound(&self, u: usize) -> f64 {
        let mut r = self.user_rate(u);
        if let Some(d) = &self.diurnal {
            r *= 1.0 + d.amplitude;
        }
        if let Some(a) = &self.anomaly {
            if a.user == u {
                r *= a.rate_multiplier.max(1.0);
            }
        }
        r
    }
}

/// Generate the flows of a scenario, sorted by start time.
///
/// Each user draws from its own random stream, so adding a user leaves the
/// others' traffic unchanged. Time-varying intensities use thinning.
pub fn generate(cfg: &ScenarioConfig) -> Result<Vec<FlowRecord>> {
    cfg.validate()?;
    let duration = Exp::new(cfg.duration_rate).map_err(|e| Error::Config(e.to_string()))?;
    let mut flows = Vec::new();
    for (u, user) in cfg.users.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, u as u64);
        let size = LogNormal::new(user.size_mu.unwrap_or(cfg.size.mu), cfg.size.sigma)
            .map_err(|e| Error::Config(e.to_string()))?;
        let bound = cfg.intensity_bound(u);
        let gap = Exp::new(bound).map_err(|e| Error::Config(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= cfg.horizon_s {
                break;
            }
            if rng.random::<f64>() * bound >= cfg.intensity(u, t) {
                continue;
            }
            let mut bytes = size.sample(&mut rng);
            if let Some(a) = &cfg.anomaly {
                if a.user == u && a.active(t) {
                    bytes *= a.size_multiplier;
                }
            }
            flows.push(FlowRecord {
                start_time: t,
                duration: duration.sample(&mut rng),
                size: bytes.round().max(1.0),
                src: user.address.clone(),
            });
        }
    }
    sort_flows(&mut flows);
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flows_to_csv, read_flows_from};

    fn base() -> ScenarioConfig {
        ScenarioConfig {
            horizon_s: 7000.0,
            rate: 0.08,
            size: LogNormalSpec { mu: 8.0, sigma: 1.0 },
            duration_rate: 0.2,
            users: (0..4)
                .map(|i| UserSpec {
                    address: format!("10.0.1.{i}"),
                    rate: None,
                    size_mu: None,
                    phase_s: 0.0,
                })
                .collect(),
            anomaly: None,
            diurnal: None,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = generate(&base()).unwrap();
        let b = generate(&base()).unwrap();
        assert_eq!(flows_to_csv(&a).unwrap(), flows_to_csv(&b).unwrap());
        assert!(a.windows(2).all(|w| w[0].start_time <= w[1].start_time));
        assert!(a.iter().all(|f| f.start_time < 7000.0 && f.size >= 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let flows = generate(&base()).unwrap();
        let back = read_flows_from(flows_to_csv(&flows).unwrap().as_bytes()).unwrap();
        assert_eq!(back, flows);
    }

    #[test]
    fn poisson_counts_within_four_sigma() {
        let mut cfg = base();
        cfg.horizon_s = 20_000.0;
        let flows = generate(&cfg).unwrap();
        let total_rate = 4.0 * 0.08;
        for (a, b) in [(0.0, 1000.0), (5000.0, 9000.0), (0.0, 20_000.0)] {
            let count = flows
                .iter()
                .filter(|f| f.start_time >= a && f.start_time < b)
                .count() as f64;
            let expected = total_rate * (b - a);
            assert!(
                (count - expected).abs() < 4.0 * expected.sqrt(),
                "[{a}, {b}): {count} vs {expected}"
            );
        }
    }

    #[test]
    fn anomaly_scales_rate() {
        let mut cfg = base();
        cfg.anomaly = Some(AnomalySpec {
            user: 2,
            start_s: 4000.0,
            end_s: 4500.0,
            rate_multiplier: 10.0,
            size_multiplier: 1.0,
        });
        let mut total = 0.0;
        let reps = 20;
        for seed in 0..reps {
            cfg.seed = seed;
            total += generate(&cfg)
                .unwrap()
                .iter()
                .filter(|f| f.src == "10.0.1.2" && f.start_time >= 4000.0 && f.start_time < 4500.0)
                .count() as f64;
        }
        let mean = total / reps as f64;
        let expected = 10.0 * 0.08 * 500.0;
        let se = (expected / reps as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn diurnal_modulates_counts() {
        let mut cfg = base();
        cfg.horizon_s = 86_400.0;
        cfg.diurnal = Some(DiurnalSpec { period_s: 86_400.0, amplitude: 0.8 });
        let flows = generate(&cfg).unwrap();
        let day = flows.iter().filter(|f| f.start_time < 43_200.0).count();
        let night = flows.len() - day;
        assert!(day as f64 > 2.0 * night as f64, "{day} vs {night}");
    }

    #[test]
    fn validation() {
        let mut cfg = base();
        cfg.anomaly = Some(AnomalySpec {
            user: 0,
            start_s: 6900.0,
            end_s: 7100.0,
            rate_multiplier: 10.0,
            size_multiplier: 1.0,
        });
        assert!(generate(&cfg).is_err());
        let mut cfg = base();
        cfg.rate = 0.0;
        assert!(generate(&cfg).is_err());
        let mut cfg = base();
        cfg.users.clear();
        assert!(generate(&cfg).is_err());
    }
}
