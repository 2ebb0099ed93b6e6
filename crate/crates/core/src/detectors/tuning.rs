//! Threshold selection for a target false-alarm rate.
//!
//! Attack-free, `z_k ~ χ²(p)` and a full window sum `w_k ~ χ²(pℓ)`, so the
//! static and windowed thresholds are chi-squared quantiles. CUSUM has no
//! closed form; its threshold is found by bisection on simulated streams.

use rayon::prelude::*;
use serde::Serialize;

use super::CusumDetector;
use crate::error::{Error, Result};
use crate::model::ClosedLoopModel;
use crate::numerics::inverse_regularized_lower_gamma;
use crate::sim::attack_free_distances;

fn check_rate(far: f64) -> Result<()> {
    if far > 0.0 && far < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "false-alarm rate must lie in (0, 1), got {far}"
        )))
    }
}

/// `α = 2 P⁻¹(p/2, 1 - A*)`.
pub fn tune_chi2(sensors: usize, far: f64) -> Result<f64> {
    tune_windowed(sensors, 1, far)
}

/// `β = 2 P⁻¹(pℓ/2, 1 - A*)`.
pub fn tune_windowed(sensors: usize, window: usize, far: f64) -> Result<f64> {
    if sensors == 0 {
        return Err(Error::domain("sensor count must be ≥ 1"));
    }
    if window == 0 {
        return Err(Error::domain("window must be ≥ 1"));
    }
    check_rate(far)?;
    let dof = (sensors * window) as f64;
    Ok(2.0 * inverse_regularized_lower_gamma(dof / 2.0, 1.0 - far)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "diagnostic", rename_all = "kebab-case")]
pub enum TuningDiagnostic {
    /// `b < p`: the statistic drifts upward under no attack.
    BiasTooSmall { bias: f64, sensors: usize },
    /// Even `τ → 0⁺` alarms less often than requested.
    RateUnattainable { max_rate: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct CusumTuning {
    pub tau: f64,
    pub bias: f64,
    pub target_rate: f64,
    /// Per-step alarm frequency at `tau` on the tuning streams.
    pub achieved_rate: f64,
    pub samples: usize,
    pub diagnostics: Vec<TuningDiagnostic>,
}

const TUNING_CHUNKS: usize = 16;
const TUNING_BURN_IN: usize = 200;
const TAU_FLOOR: f64 = 1e-9;

fn cusum_rate(streams: &[Vec<f64>], tau: f64, bias: f64) -> f64 {
    let (alarms, steps) = streams
        .par_iter()
        .map(|zs| {
            let mut d = CusumDetector::new(tau, bias).expect("validated parameters");
            let alarms = zs
                .iter()
                .enumerate()
                .filter(|(i, z)| d.update(**z, *i as u64 + 1).is_some())
                .count();
            (alarms, zs.len())
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    alarms as f64 / steps as f64
}

/// Finds `τ` whose attack-free per-step alarm frequency matches `far`.
///
/// `samples` distances are simulated from `model` in independent seeded
/// substreams; the same streams are reused for every bisection step, so
/// the result is deterministic in `seed`.
pub fn tune_cusum_tau(
    model: &ClosedLoopModel,
    bias: f64,
    far: f64,
    samples: usize,
    seed: u64,
) -> Result<CusumTuning> {
    check_rate(far)?;
    if !(bias > 0.0 && bias.is_finite()) {
        return Err(Error::domain(format!("bias must be positive, got {bias}")));
    }
    if samples < TUNING_CHUNKS {
        return Err(Error::domain(format!(
            "sample budget {samples} is too small"
        )));
    }
    let mut diagnostics = Vec::new();
    if bias < model.p() as f64 {
        diagnostics.push(TuningDiagnostic::BiasTooSmall {
            bias,
            sensors: model.p(),
        });
    }

    let per_chunk = samples.div_ceil(TUNING_CHUNKS);
    let streams: Vec<Vec<f64>> = (0..TUNING_CHUNKS as u64)
        .into_par_iter()
        .map(|chunk| attack_free_distances(model, per_chunk, TUNING_BURN_IN, seed, chunk))
        .collect();
    let total = per_chunk * TUNING_CHUNKS;

    let floor_rate = cusum_rate(&streams, TAU_FLOOR, bias);
    if floor_rate < far {
        diagnostics.push(TuningDiagnostic::RateUnattainable {
            max_rate: floor_rate,
        });
        return Ok(CusumTuning {
            tau: TAU_FLOOR,
            bias,
            target_rate: far,
            achieved_rate: floor_rate,
            samples: total,
            diagnostics,
        });
    }

    let mut lo = TAU_FLOOR;
    let mut hi = bias.max(1.0);
    while cusum_rate(&streams, hi, bias) > far {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NonConvergence(
                "CUSUM threshold search diverged".into(),
            ));
        }
    }
    // rate(lo) > far >= rate(hi)
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if cusum_rate(&streams, mid, bias) > far {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved_rate = cusum_rate(&streams, hi, bias);
    Ok(CusumTuning {
        tau: hi,
        bias,
        target_rate: far,
        achieved_rate,
        samples: total,
        diagnostics,
    })
}
