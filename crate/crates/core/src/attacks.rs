//! Zero-alarm sensor attacks and the steady-state deviation they cause.
//!
//! Every attack here replaces the residual with a chosen vector:
//!
//! ```text
//! δ_k = -C e_k - η_k + Σ^{1/2} ψ_k   ⇒   r_k = Σ^{1/2} ψ_k,  z_k = ψ_kᵀ ψ_k
//! ```
//!
//! so the detector sees exactly `ψ_kᵀψ_k`. With a constant `ψ = m·d` the
//! mean state settles at `-M ψ`, where
//!
//! ```text
//! M = (I - F - GK)⁻¹ G K (I - F)⁻¹ L Σ^{1/2}
//! ```
//!
//! and the deviation bound is `γ = ‖M m d‖`. The worst unit direction `d`
//! is the top eigenvector of `MᵀM`.

use serde::{Deserialize, Serialize};

use crate::detectors::{Detector, DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::model::ClosedLoopModel;
use crate::numerics::linalg::solve;
use crate::numerics::{max_eigenpair, spectral_radius, Matrix, SymmetricPsd, Vector};

/// `M` from raw pieces. Both inverses are applied as linear solves.
pub fn steady_state_gain(
    f: &Matrix,
    g: &Matrix,
    k: &Matrix,
    l: &Matrix,
    sigma_half: &Matrix,
) -> Result<Matrix> {
    let n = f.nrows();
    let id = Matrix::identity(n, n);
    let inner = solve(&(&id - f), &(l * sigma_half), "I - F")?;
    let gk = g * k;
    solve(&(&id - f - &gk), &(&gk * inner), "I - F - GK")
}

/// `M` for a closed loop; requires `ρ[F] < 1` and `ρ[F+GK] < 1`.
pub fn compute_m(model: &ClosedLoopModel) -> Result<Matrix> {
    let cert = model.certificate();
    if cert.open_loop >= 1.0 {
        return Err(Error::StabilityPrecondition(format!(
            "rho[F] = {} is not below 1",
            cert.open_loop
        )));
    }
    if cert.closed_loop >= 1.0 {
        return Err(Error::StabilityPrecondition(format!(
            "rho[F+GK] = {} is not below 1",
            cert.closed_loop
        )));
    }
    let plant = model.plant();
    steady_state_gain(
        plant.f(),
        plant.g(),
        model.k(),
        model.l(),
        model.sigma_half(),
    )
}

#[derive(Debug, Clone)]
pub struct WorstDirection {
    /// Unit vector maximizing `‖M v‖`.
    pub nu1: Vector,
    /// Largest eigenvalue of `MᵀM`, i.e. `‖M ν₁‖²`.
    pub lambda1: f64,
}

pub fn worst_direction(m: &Matrix) -> WorstDirection {
    let mtm = SymmetricPsd::new(m.transpose() * m).expect("MᵀM is symmetric PSD");
    let (lambda1, nu1) = max_eigenpair(&mtm);
    WorstDirection { nu1, lambda1 }
}

/// Normalized all-ones direction `𝟙/√p`.
pub fn ones_direction(p: usize) -> Vector {
    Vector::from_element(p, 1.0 / (p as f64).sqrt())
}

/// Relative shrink of a saturating `‖ψ_k‖`, so rounding cannot push the
/// statistic past a threshold it is meant to touch.
pub const TIE_MARGIN: f64 = 1e-12;

/// How an attack picks its unit direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttackDirection {
    Named(NamedDirection),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedDirection {
    /// Top eigenvector of `MᵀM`.
    Worst,
    /// `𝟙/√p`, carrying the full threshold budget.
    Ones,
    /// The unscaled vector `𝟙` used as `ψ` verbatim.
    OnesRaw,
}

impl AttackDirection {
    /// Resolves to a unit direction and, for `OnesRaw`, a fixed magnitude.
    pub fn resolve(&self, model: &ClosedLoopModel) -> Result<(Vector, AttackScale)> {
        let p = model.p();
        match self {
            AttackDirection::Named(NamedDirection::Worst) => {
                Ok((worst_direction(&compute_m(model)?).nu1, AttackScale::Budget))
            }
            AttackDirection::Named(NamedDirection::Ones) => {
                Ok((ones_direction(p), AttackScale::Budget))
            }
            AttackDirection::Named(NamedDirection::OnesRaw) => {
                Ok((ones_direction(p), AttackScale::Fixed((p as f64).sqrt())))
            }
            AttackDirection::Explicit(v) => {
                if v.len() != p {
                    return Err(Error::dim("attack direction", p, v.len()));
                }
                let v = Vector::from_column_slice(v);
                let norm = v.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::domain(
                        "attack direction must be a nonzero finite vector",
                    ));
                }
                Ok((v / norm, AttackScale::Budget))
            }
        }
    }
}

/// Magnitude of `ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackScale {
    /// Derived from the detector threshold so the statistic saturates.
    Budget,
    /// Fixed `‖ψ‖`, which must stay within the per-step budget.
    Fixed(f64),
}

/// Schedule of the windowed attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowedSaturation {
    /// Constant `ψ` from `k*` on.
    #[default]
    PaperStatic,
    /// `‖ψ_k‖² = β - (sum of the ℓ-1 most recent distances)`, clamped at 0,
    /// so `w_k = β` even while pre-attack distances remain in the window.
    GreedySaturating,
    /// Full budget `√β` every ℓ-th step starting at `k*`, zero otherwise.
    Pulse,
}

/// Per-step share of the windowed budget for the static schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowedScaling {
    /// `‖ψ‖ = √(β/ℓ)`: ℓ equal steps sum to exactly `β`.
    #[default]
    PerStepShare,
    /// `‖ψ‖ = √β / ℓ`. Compatibility option; the window then sums to `β/ℓ`.
    RootOverWindow,
}

/// First step of the CUSUM attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CusumStart {
    /// `‖ψ_{k*}‖² = τ`.
    #[default]
    Verbatim,
    /// `‖ψ_{k*}‖² = τ + b - S_{k*-1}`, which lands `S_{k*}` on `τ` exactly.
    ExactSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Chi2,
    Cusum,
    WindowedStatic,
    WindowedPulse,
}

/// A zero-alarm attack against one detector.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    target: DetectorConfig,
    k_star: u64,
    direction: Vector,
    scale: AttackScale,
    saturation: WindowedSaturation,
    scaling: WindowedScaling,
    cusum_start: CusumStart,
}

impl AttackPlan {
    /// `direction` is normalized; it must be nonzero.
    pub fn new(target: DetectorConfig, k_star: u64, direction: Vector) -> Result<Self> {
        target.validate()?;
        if k_star < 1 {
            return Err(Error::domain("attack start k* must be ≥ 1"));
        }
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::domain(
                "attack direction must be a nonzero finite vector",
            ));
        }
        Ok(AttackPlan {
            target,
            k_star,
            direction: direction / norm,
            scale: AttackScale::Budget,
            saturation: WindowedSaturation::default(),
            scaling: WindowedScaling::default(),
            cusum_start: CusumStart::default(),
        })
    }

    pub fn with_scale(mut self, scale: AttackScale) -> Result<Self> {
        self.scale = scale;
        self.check_budget()?;
        Ok(self)
    }

    pub fn with_saturation(mut self, saturation: WindowedSaturation) -> Result<Self> {
        self.saturation = saturation;
        self.check_budget()?;
        Ok(self)
    }

    pub fn with_scaling(mut self, scaling: WindowedScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_cusum_start(mut self, start: CusumStart) -> Self {
        self.cusum_start = start;
        self
    }

    fn check_budget(&self) -> Result<()> {
        let AttackScale::Fixed(m) = self.scale else {
            return Ok(());
        };
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::domain(format!(
                "fixed attack magnitude must be finite and nonnegative, got {m}"
            )));
        }
        let budget = match (self.target, self.saturation) {
            (DetectorConfig::ChiSquared { alpha }, _) => alpha,
            (DetectorConfig::Cusum { bias, .. }, _) => bias,
            (DetectorConfig::Windowed { .. }, WindowedSaturation::GreedySaturating) => {
                return Err(Error::domain("greedy saturation chooses its own magnitude"));
            }
            (DetectorConfig::Windowed { beta, .. }, WindowedSaturation::Pulse) => beta,
            (DetectorConfig::Windowed { beta, window }, WindowedSaturation::PaperStatic) => {
                beta / window as f64
            }
        };
        if m * m > budget * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "fixed magnitude {m} exceeds the zero-alarm budget sqrt({budget})"
            )));
        }
        Ok(())
    }

    pub fn target(&self) -> &DetectorConfig {
        &self.target
    }
    pub fn k_star(&self) -> u64 {
        self.k_star
    }
    pub fn direction(&self) -> &Vector {
        &self.direction
    }
    pub fn scale(&self) -> AttackScale {
        self.scale
    }
    pub fn saturation(&self) -> WindowedSaturation {
        self.saturation
    }

    pub fn kind(&self) -> AttackKind {
        match (self.target, self.saturation) {
            (DetectorConfig::ChiSquared { .. }, _) => AttackKind::Chi2,
            (DetectorConfig::Cusum { .. }, _) => AttackKind::Cusum,
            (DetectorConfig::Windowed { .. }, WindowedSaturation::Pulse) => {
                AttackKind::WindowedPulse
            }
            (DetectorConfig::Windowed { .. }, _) => AttackKind::WindowedStatic,
        }
    }

    pub fn is_active(&self, k: u64) -> bool {
        k >= self.k_star
    }

    /// Long-run mean of `‖ψ_k‖`, the scalar that multiplies `M d` in `γ`.
    ///
    /// For the pulse schedule this is the period average `√β/ℓ`; for greedy
    /// saturation it is the upper bound `√(β/ℓ)`.
    pub fn steady_magnitude(&self) -> f64 {
        match (self.target, self.scale) {
            (DetectorConfig::ChiSquared { alpha }, AttackScale::Budget) => alpha.sqrt(),
            (DetectorConfig::Cusum { bias, .. }, AttackScale::Budget) => bias.sqrt(),
            (DetectorConfig::Windowed { beta, window }, scale) => {
                let ell = window as f64;
                match (self.saturation, scale) {
                    (WindowedSaturation::Pulse, AttackScale::Budget) => beta.sqrt() / ell,
                    (WindowedSaturation::Pulse, AttackScale::Fixed(m)) => m / ell,
                    (_, AttackScale::Fixed(m)) => m,
                    (_, AttackScale::Budget) => match self.scaling {
                        WindowedScaling::PerStepShare => (beta / ell).sqrt(),
                        WindowedScaling::RootOverWindow => beta.sqrt() / ell,
                    },
                }
            }
            (_, AttackScale::Fixed(m)) => m,
        }
    }

    /// `ψ_k`, the whitened residual the attack imposes at step `k ≥ k*`.
    ///
    /// `detector` must hold the state after step `k - 1`.
    pub fn whitened_residual(&self, detector: &Detector, k: u64) -> Vector {
        let offset = k.saturating_sub(self.k_star);
        let saturating = match self.target {
            DetectorConfig::Cusum { .. } => offset == 0,
            _ => true,
        };
        let magnitude = match (self.target, self.scale) {
            (DetectorConfig::ChiSquared { .. }, _) => self.steady_magnitude(),
            (DetectorConfig::Cusum { .. }, AttackScale::Fixed(m)) => m,
            (DetectorConfig::Cusum { tau, bias }, AttackScale::Budget) => {
                if offset == 0 {
                    match self.cusum_start {
                        CusumStart::Verbatim => tau.sqrt(),
                        CusumStart::ExactSaturating => {
                            (tau + bias - detector.statistic()).max(0.0).sqrt()
                        }
                    }
                } else {
                    bias.sqrt()
                }
            }
            (DetectorConfig::Windowed { beta, window }, scale) => match self.saturation {
                WindowedSaturation::PaperStatic => self.steady_magnitude(),
                WindowedSaturation::Pulse => {
                    if offset.is_multiple_of(window as u64) {
                        match scale {
                            AttackScale::Budget => beta.sqrt(),
                            AttackScale::Fixed(m) => m,
                        }
                    } else {
                        0.0
                    }
                }
                WindowedSaturation::GreedySaturating => {
                    let remaining: f64 = match detector {
                        Detector::Windowed(w) => {
                            let skip = usize::from(w.is_full());
                            w.contents().skip(skip).sum()
                        }
                        _ => 0.0,
                    };
                    (beta - remaining).max(0.0).sqrt()
                }
            },
        };
        let margin = if saturating { 1.0 - TIE_MARGIN } else { 1.0 };
        &self.direction * (magnitude * margin)
    }

    /// Sensor injection `δ_k = -C e_k - η_k + Σ^{1/2} ψ_k`, or zero before `k*`.
    pub fn synthesize(
        &self,
        model: &ClosedLoopModel,
        e: &Vector,
        eta: &Vector,
        detector: &Detector,
        k: u64,
    ) -> Vector {
        if !self.is_active(k) {
            return Vector::zeros(model.p());
        }
        let psi = self.whitened_residual(detector, k);
        model.sigma_half() * psi - model.plant().c() * e - eta
    }

    /// `γ = ‖M · magnitude · direction‖` for this plan.
    pub fn deviation_bound(&self, m: &Matrix) -> DeviationBound {
        DeviationBound::new(
            m,
            self.target.kind(),
            self.steady_magnitude(),
            self.direction.clone(),
        )
    }
}

/// Predicted `lim ‖E[x_k]‖` under a sustained attack.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationBound {
    pub gamma: f64,
    pub kind: DetectorKind,
    pub magnitude: f64,
    pub direction: Vec<f64>,
}

impl DeviationBound {
    pub fn new(m: &Matrix, kind: DetectorKind, magnitude: f64, direction: Vector) -> Self {
        let gamma = (m * (&direction * magnitude)).norm();
        DeviationBound {
            gamma,
            kind,
            magnitude,
            direction: direction.iter().copied().collect(),
        }
    }
}

/// Deviation bound for a detector with the budget magnitude
/// (`√α`, `√b`, or `√(β/ℓ)`) along unit `direction`.
pub fn gamma_bound(
    model: &ClosedLoopModel,
    config: &DetectorConfig,
    direction: &Vector,
) -> Result<DeviationBound> {
    if direction.len() != model.p() {
        return Err(Error::dim("direction", model.p(), direction.len()));
    }
    if (direction.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::domain("direction must have unit norm"));
    }
    let m = compute_m(model)?;
    let plan = AttackPlan::new(*config, 1, direction.clone())?;
    Ok(plan.deviation_bound(&m))
}

/// Ratio `β(ℓ)/ℓ`, the per-step windowed budget that tends to `p` as `ℓ → ∞`.
pub fn windowed_per_step_budget(sensors: usize, window: usize, far: f64) -> Result<f64> {
    Ok(crate::detectors::tune_windowed(sensors, window, far)? / window as f64)
}

/// Checks `ρ[F] < 1`, needed for the deviation limits to exist.
pub fn open_loop_stable(model: &ClosedLoopModel) -> Result<bool> {
    Ok(spectral_radius(model.plant().f())? < 1.0)
}
