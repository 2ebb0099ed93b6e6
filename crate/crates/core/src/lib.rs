//! Residual-based attack detection for stochastic LTI control loops.
//!
//! A steady-state Kalman filter produces residuals `r_k`; three detectors
//! watch the normalized distance `z_k = r_kᵀ Σ⁻¹ r_k`:
//!
//! - static chi-squared: alarm when `z_k > α`
//! - windowed chi-squared: alarm when the sum of the last `ℓ` distances exceeds `β`
//! - CUSUM: `S_k = max(0, S_{k-1} + z_k - b)`, alarm and reset once `S_{k-1} > τ`
//!
//! [`detectors`] tunes each to a false-alarm rate, [`attacks`] builds sensor
//! attacks that keep each detector silent and predicts the steady-state
//! deviation `γ = ‖M δ̄‖` they cause, and [`sim`] measures all of it by
//! Monte-Carlo. [`reactor`] bundles the stirred-tank benchmark.

pub mod attacks;
pub mod cli;
pub mod detectors;
pub mod error;
pub mod model;
pub mod numerics;
pub mod reactor;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
