//! Residual detectors driven by the distance measure `z_k`.
//!
//! All three detectors treat ties as "no alarm": `z = α`, `w = β` and
//! `S = τ` never fire.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod arl;
mod tuning;

pub use arl::{
    alarm_frequency, estimate_arl, ArlEstimate, FrequencyEstimate, DEFAULT_RUN_LENGTH_CAP,
};
pub use tuning::{tune_chi2, tune_cusum_tau, tune_windowed, CusumTuning, TuningDiagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "chi2")]
    ChiSquared,
    #[serde(rename = "windowed")]
    Windowed,
    #[serde(rename = "cusum")]
    Cusum,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::ChiSquared => "chi2",
            DetectorKind::Windowed => "windowed",
            DetectorKind::Cusum => "cusum",
        })
    }
}

/// Detector parameters, without running state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DetectorConfig {
    #[serde(rename = "chi2")]
    ChiSquared { alpha: f64 },
    #[serde(rename = "windowed")]
    Windowed { beta: f64, window: usize },
    #[serde(rename = "cusum")]
    Cusum { tau: f64, bias: f64 },
}

impl DetectorConfig {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorConfig::ChiSquared { .. } => DetectorKind::ChiSquared,
            DetectorConfig::Windowed { .. } => DetectorKind::Windowed,
            DetectorConfig::Cusum { .. } => DetectorKind::Cusum,
        }
    }

    /// The value the running statistic is compared against.
    pub fn threshold(&self) -> f64 {
        match *self {
            DetectorConfig::ChiSquared { alpha } => alpha,
            DetectorConfig::Windowed { beta, .. } => beta,
            DetectorConfig::Cusum { tau, .. } => tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            DetectorConfig::ChiSquared { alpha } => positive(alpha, "alpha"),
            DetectorConfig::Windowed { beta, window } => {
                if window == 0 {
                    return Err(Error::domain("window must be ≥ 1"));
                }
                positive(beta, "beta")
            }
            DetectorConfig::Cusum { tau, bias } => {
                positive(tau, "tau")?;
                positive(bias, "bias")
            }
        }
    }
}

/// An alarm raised at step `k_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmEvent {
    pub k_star: u64,
    pub kind: DetectorKind,
    /// Statistic value that exceeded the threshold.
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSqDetector {
    alpha: f64,
    last: f64,
}

impl ChiSqDetector {
    pub fn new(alpha: f64) -> Result<Self> {
        DetectorConfig::ChiSquared { alpha }.validate()?;
        Ok(ChiSqDetector { alpha, last: 0.0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn update(&mut self, z: f64, k: u64) -> Option<AlarmEvent> {
        self.last = z;
        (z > self.alpha).then_some(AlarmEvent {
            k_star: k,
            kind: DetectorKind::ChiSquared,
            statistic: z,
        })
    }
}

/// Sliding-window sum of the last `ℓ` distances.
///
/// Alarms are suppressed until the window has been filled once.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedChiSqDetector {
    beta: f64,
    window: usize,
    buffer: VecDeque<f64>,
    sum: f64,
    since_resync: usize,
}

const RESYNC_EVERY: usize = 4096;

impl WindowedChiSqDetector {
    pub fn new(beta: f64, window: usize) -> Result<Self> {
        DetectorConfig::Windowed { beta, window }.validate()?;
        Ok(WindowedChiSqDetector {
            beta,
            window,
            buffer: VecDeque::with_capacity(window),
            sum: 0.0,
            since_resync: 0,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.window
    }
    /// Current window sum `w_k`.
    pub fn sum(&self) -> f64 {
        self.sum
    }
    /// Distances currently held, oldest first.
    pub fn contents(&self) -> impl Iterator<Item = f64> + '_ {
        self.buffer.iter().copied()
    }

    pub fn update(&mut self, z: f64, k: u64) -> Option<AlarmEvent> {
        if self.buffer.len() == self.window {
            let old = self.buffer.pop_front().expect("window is nonempty");
            self.sum -= old;
        }
        self.buffer.push_back(z);
        self.sum += z;
        self.since_resync += 1;
        if self.since_resync >= RESYNC_EVERY {
            self.sum = self.buffer.iter().sum();
            self.since_resync = 0;
        }
        (self.is_full() && self.sum > self.beta).then_some(AlarmEvent {
            k_star: k,
            kind: DetectorKind::Windowed,
            statistic: self.sum,
        })
    }
}

/// One-sided CUSUM on `z_k - b`.
///
/// The exceedance test looks at the previous statistic: an update that
/// finds `S_{k-1} > τ` reports the alarm at `k - 1` and resets `S_k = 0`
/// without accumulating `z_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumDetector {
    tau: f64,
    bias: f64,
    stat: f64,
}

impl CusumDetector {
    pub fn new(tau: f64, bias: f64) -> Result<Self> {
        DetectorConfig::Cusum { tau, bias }.validate()?;
        Ok(CusumDetector {
            tau,
            bias,
            stat: 0.0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn bias(&self) -> f64 {
        self.bias
    }
    pub fn statistic(&self) -> f64 {
        self.stat
    }

    pub fn update(&mut self, z: f64, k: u64) -> Option<AlarmEvent> {
        if self.stat > self.tau {
            let event = AlarmEvent {
                k_star: k.saturating_sub(1),
                kind: DetectorKind::Cusum,
                statistic: self.stat,
            };
            self.stat = 0.0;
            Some(event)
        } else {
            self.stat = (self.stat + z - self.bias).max(0.0);
            None
        }
    }
}

/// Any of the three detectors with its running state.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    ChiSquared(ChiSqDetector),
    Windowed(WindowedChiSqDetector),
    Cusum(CusumDetector),
}

impl Detector {
    pub fn new(config: &DetectorConfig) -> Result<Self> {
        Ok(match *config {
            DetectorConfig::ChiSquared { alpha } => {
                Detector::ChiSquared(ChiSqDetector::new(alpha)?)
            }
            DetectorConfig::Windowed { beta, window } => {
                Detector::Windowed(WindowedChiSqDetector::new(beta, window)?)
            }
            DetectorConfig::Cusum { tau, bias } => Detector::Cusum(CusumDetector::new(tau, bias)?),
        })
    }

    pub fn config(&self) -> DetectorConfig {
        match self {
            Detector::ChiSquared(d) => DetectorConfig::ChiSquared { alpha: d.alpha },
            Detector::Windowed(d) => DetectorConfig::Windowed {
                beta: d.beta,
                window: d.window,
            },
            Detector::Cusum(d) => DetectorConfig::Cusum {
                tau: d.tau,
                bias: d.bias,
            },
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.config().kind()
    }

    pub fn update(&mut self, z: f64, k: u64) -> Option<AlarmEvent> {
        debug_assert!(z >= 0.0, "distance measure must be nonnegative");
        match self {
            Detector::ChiSquared(d) => d.update(z, k),
            Detector::Windowed(d) => d.update(z, k),
            Detector::Cusum(d) => d.update(z, k),
        }
    }

    /// Running statistic: last `z`, window sum `w`, or CUSUM `S`.
    pub fn statistic(&self) -> f64 {
        match self {
            Detector::ChiSquared(d) => d.last,
            Detector::Windowed(d) => d.sum,
            Detector::Cusum(d) => d.stat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_boundary_is_no_alarm() {
        let mut d = ChiSqDetector::new(7.81).unwrap();
        assert!(d.update(7.81, 1).is_none());
        let ev = d.update(7.81 + 1e-9, 2).unwrap();
        assert_eq!(ev.k_star, 2);
        assert_eq!(ev.kind, DetectorKind::ChiSquared);
    }

    #[test]
    fn windowed_saturation_boundary() {
        let (beta, ell) = (21.0, 4);
        let mut d = WindowedChiSqDetector::new(beta, ell).unwrap();
        for k in 1..=100 {
            assert!(d.update(beta / ell as f64, k).is_none());
        }
        assert!((d.sum() - beta).abs() < 1e-12);
    }

    #[test]
    fn windowed_warm_up_suppresses_alarms() {
        let mut d = WindowedChiSqDetector::new(1.0, 3).unwrap();
        assert!(d.update(10.0, 1).is_none());
        assert!(d.update(10.0, 2).is_none());
        assert_eq!(d.update(10.0, 3).unwrap().k_star, 3);
    }

    #[test]
    fn windowed_evicts_oldest() {
        let mut d = WindowedChiSqDetector::new(100.0, 2).unwrap();
        d.update(1.0, 1);
        d.update(2.0, 2);
        d.update(4.0, 3);
        assert_eq!(d.sum(), 6.0);
        assert_eq!(d.contents().collect::<Vec<_>>(), vec![2.0, 4.0]);
    }

    #[test]
    fn cusum_at_bias_stays_at_zero() {
        let mut d = CusumDetector::new(0.86, 3.0).unwrap();
        for k in 1..1000 {
            assert!(d.update(3.0, k).is_none());
            assert_eq!(d.statistic(), 0.0);
        }
    }

    #[test]
    fn cusum_alarm_is_reported_one_step_late() {
        let (tau, b) = (2.0, 3.0);
        let mut d = CusumDetector::new(tau, b).unwrap();
        assert!(d.update(tau + b, 1).is_none());
        assert_eq!(d.statistic(), tau);
        // at the threshold: no alarm yet
        assert!(d.update(b, 2).is_none());
        assert_eq!(d.statistic(), tau);
        assert!(d.update(b + 1e-6, 3).is_none());
        let ev = d.update(b, 4).unwrap();
        assert_eq!(ev.k_star, 3);
        assert_eq!(d.statistic(), 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ChiSqDetector::new(0.0).is_err());
        assert!(WindowedChiSqDetector::new(1.0, 0).is_err());
        assert!(CusumDetector::new(1.0, 0.0).is_err());
        assert!(CusumDetector::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = DetectorConfig::Windowed {
            beta: 21.03,
            window: 4,
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"kind":"windowed","beta":21.03,"window":4}"#);
        assert_eq!(serde_json::from_str::<DetectorConfig>(&s).unwrap(), c);
    }
}
