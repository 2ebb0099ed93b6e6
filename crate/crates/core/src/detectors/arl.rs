//! Average run length and per-step alarm frequency by simulation.

use rayon::prelude::*;
use serde::Serialize;

use super::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::model::ClosedLoopModel;
use crate::sim::AttackFreeStream;

pub const DEFAULT_RUN_LENGTH_CAP: u64 = 1_000_000;
const ARL_BURN_IN: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct ArlEstimate {
    /// Mean steps from detector start to first alarm.
    pub arl: f64,
    /// `1 / arl`.
    pub alarm_rate: f64,
    /// 95% confidence half-width of `arl`.
    pub half_width: f64,
    pub runs: usize,
    /// Runs that reached the cap without alarming; counted at the cap.
    pub censored_runs: usize,
    pub cap: u64,
}

impl ArlEstimate {
    pub fn is_censored(&self) -> bool {
        self.censored_runs > 0
    }
}

/// Runs `runs` independent attack-free loops until the first alarm.
pub fn estimate_arl(
    model: &ClosedLoopModel,
    config: &DetectorConfig,
    runs: usize,
    seed: u64,
    cap: u64,
) -> Result<ArlEstimate> {
    config.validate()?;
    if runs == 0 {
        return Err(Error::domain("ARL needs at least one run"));
    }
    if cap == 0 {
        return Err(Error::domain("run-length cap must be positive"));
    }
    let lengths: Vec<(u64, bool)> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut detector = Detector::new(config).expect("validated config");
            let stream = AttackFreeStream::new(model, seed, run, ARL_BURN_IN);
            for (k, z) in (1..=cap).zip(stream) {
                if let Some(alarm) = detector.update(z, k) {
                    return (alarm.k_star.max(1), false);
                }
            }
            (cap, true)
        })
        .collect();

    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|(l, _)| *l as f64).sum::<f64>() / n;
    let var = if lengths.len() > 1 {
        lengths
            .iter()
            .map(|(l, _)| (*l as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let censored_runs = lengths.iter().filter(|(_, c)| *c).count();
    Ok(ArlEstimate {
        arl: mean,
        alarm_rate: 1.0 / mean,
        half_width: 1.96 * (var / n).sqrt(),
        runs,
        censored_runs,
        cap,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyEstimate {
    /// Alarms per detector update.
    pub rate: f64,
    /// Standard error from the spread of per-chunk rates.
    pub std_error: f64,
    pub alarms: u64,
    pub steps: u64,
}

/// Per-step alarm frequency over `chunks` independent attack-free streams
/// of `steps_per_chunk` updates each.
pub fn alarm_frequency(
    model: &ClosedLoopModel,
    config: &DetectorConfig,
    steps_per_chunk: usize,
    chunks: usize,
    seed: u64,
) -> Result<FrequencyEstimate> {
    config.validate()?;
    if chunks < 2 || steps_per_chunk == 0 {
        return Err(Error::domain(
            "alarm frequency needs at least two nonempty chunks",
        ));
    }
    let counts: Vec<(u64, u64)> = (0..chunks as u64)
        .into_par_iter()
        .map(|chunk| {
            let mut detector = Detector::new(config).expect("validated config");
            let stream = AttackFreeStream::new(model, seed, chunk, ARL_BURN_IN);
            let mut alarms = 0u64;
            let mut steps = 0u64;
            for (k, z) in (1..=steps_per_chunk as u64).zip(stream) {
                if detector.update(z, k).is_some() {
                    alarms += 1;
                }
                steps += 1;
            }
            (alarms, steps)
        })
        .collect();
    let alarms: u64 = counts.iter().map(|c| c.0).sum();
    let steps: u64 = counts.iter().map(|c| c.1).sum();
    let rate = alarms as f64 / steps as f64;
    let rates: Vec<f64> = counts.iter().map(|(a, s)| *a as f64 / *s as f64).collect();
    let n = rates.len() as f64;
    let var = rates.iter().map(|r| (r - rate).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FrequencyEstimate {
        rate,
        std_error: (var / n).sqrt(),
        alarms,
        steps,
    })
}
