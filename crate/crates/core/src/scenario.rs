//! JSON scenario files.
//!
//! ```json
//! {
//!   "plant":      { "F": [[..]], "G": [[..]], "C": [[..]], "R1": [[..]], "R2": [[..]] },
//!   "controller": { "K": [[..]] },
//!   "estimator":  { "L": [[..]] },
//!   "detector":   { "kind": "windowed", "far": 0.05, "window": 4 },
//!   "attack":     { "kind": "windowed-static", "direction": "worst", "k_star": 51 },
//!   "sim":        { "steps": 1000, "burn_in": 50, "seed": 1, "mc_runs": 200 }
//! }
//! ```
//!
//! `estimator` and `attack` are optional. A detector gives either its
//! explicit parameter (`alpha`, `beta`, `tau`) or `far` to be tuned.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacks::{
    AttackDirection, AttackPlan, CusumStart, NamedDirection, WindowedSaturation, WindowedScaling,
};
use crate::detectors::{
    tune_chi2, tune_cusum_tau, tune_windowed, CusumTuning, DetectorConfig, DetectorKind,
};
use crate::error::{Error, Result};
use crate::model::{ClosedLoopModel, PlantModel};
use crate::numerics::{matrix_from_rows, symmetrize, Matrix};
use crate::sim::{Scenario, DEFAULT_BURN_IN, DEFAULT_RUNS, DEFAULT_STEPS};

pub const DEFAULT_TUNING_SAMPLES: usize = 1_000_000;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "R1")]
    pub r1: Rows,
    #[serde(rename = "R2")]
    pub r2: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(rename = "K")]
    pub k: Rows,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Monte-Carlo budget for CUSUM threshold tuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKindSpec {
    None,
    Chi2,
    Cusum,
    WindowedStatic,
    WindowedPulse,
}

fn default_direction() -> AttackDirection {
    AttackDirection::Named(NamedDirection::Worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKindSpec,
    #[serde(default = "default_direction")]
    pub direction: AttackDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<u64>,
    /// `paper-static` | `greedy-saturating` (windowed), `verbatim` | `exact-saturating` (cusum).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<WindowedScaling>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_runs: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    pub detector: DetectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub sim: SimSpec,
}

/// A scenario ready to run, plus everything that was derived or repaired
/// while building it.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub cusum_tuning: Option<CusumTuning>,
    /// Human-readable notes about repaired input, e.g. covariance symmetrization.
    pub adjustments: Vec<String>,
}

fn named(rows: &Rows, what: &str) -> Result<Matrix> {
    matrix_from_rows(rows).map_err(|e| Error::Scenario(format!("{what}: {e}")))
}

fn symmetrized(m: Matrix, what: &str, adjustments: &mut Vec<String>) -> Matrix {
    if !m.is_square() {
        return m;
    }
    let gap = (&m - m.transpose()).amax();
    if gap > 0.0 {
        adjustments.push(format!("{what} was not symmetric (max |{what} - {what}^T| = {gap}); replaced by ({what} + {what}^T)/2"));
        symmetrize(&m)
    } else {
        m
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the plant and closed loop, symmetrizing covariances if needed.
    pub fn build_model(&self) -> Result<(ClosedLoopModel, Vec<String>)> {
        let mut adjustments = Vec::new();
        let f = named(&self.plant.f, "F")?;
        let g = named(&self.plant.g, "G")?;
        let c = named(&self.plant.c, "C")?;
        let r1 = symmetrized(named(&self.plant.r1, "R1")?, "R1", &mut adjustments);
        let r2 = symmetrized(named(&self.plant.r2, "R2")?, "R2", &mut adjustments);
        let k = named(&self.controller.k, "K")?;
        let l = self
            .estimator
            .l
            .as_ref()
            .map(|l| named(l, "L"))
            .transpose()?;
        let plant = PlantModel::new(f, g, c, r1, r2)?;
        Ok((ClosedLoopModel::build(plant, k, l)?, adjustments))
    }

    fn detector_config(
        &self,
        model: &ClosedLoopModel,
        seed: u64,
    ) -> Result<(DetectorConfig, Option<CusumTuning>)> {
        let d = &self.detector;
        let p = model.p();
        let pick =
            |explicit: Option<f64>, name: &str, tune: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
                match (explicit, d.far) {
                    (Some(_), Some(_)) => Err(Error::Scenario(format!(
                        "detector gives both {name} and far"
                    ))),
                    (Some(v), None) => Ok(v),
                    (None, Some(far)) => tune(far),
                    (None, None) => Err(Error::Scenario(format!("detector needs {name} or far"))),
                }
            };
        let config = match d.kind {
            DetectorKind::ChiSquared => DetectorConfig::ChiSquared {
                alpha: pick(d.alpha, "alpha", &|far| tune_chi2(p, far))?,
            },
            DetectorKind::Windowed => {
                let window = d
                    .window
                    .ok_or_else(|| Error::Scenario("windowed detector needs window".into()))?;
                if window == 0 {
                    return Err(Error::domain("window must be ≥ 1"));
                }
                DetectorConfig::Windowed {
                    beta: pick(d.beta, "beta", &|far| tune_windowed(p, window, far))?,
                    window,
                }
            }
            DetectorKind::Cusum => {
                let bias = d.bias.unwrap_or(p as f64);
                if let Some(tau) = d.tau {
                    if d.far.is_some() {
                        return Err(Error::Scenario("detector gives both tau and far".into()));
                    }
                    DetectorConfig::Cusum { tau, bias }
                } else {
                    let far = d
                        .far
                        .ok_or_else(|| Error::Scenario("detector needs tau or far".into()))?;
                    let samples = d.tune_samples.unwrap_or(DEFAULT_TUNING_SAMPLES);
                    let tuning = tune_cusum_tau(model, bias, far, samples, seed)?;
                    let config = DetectorConfig::Cusum {
                        tau: tuning.tau,
                        bias,
                    };
                    config.validate()?;
                    return Ok((config, Some(tuning)));
                }
            }
        };
        config.validate()?;
        Ok((config, None))
    }

    /// Builds the runnable scenario. `default_seed` applies when `sim.seed` is absent.
    pub fn load(&self, default_seed: u64) -> Result<LoadedScenario> {
        let (model, adjustments) = self.build_model()?;
        let seed = self.sim.seed.unwrap_or(default_seed);
        let (detector, cusum_tuning) = self.detector_config(&model, seed)?;

        let attack_k_star = self.attack.as_ref().and_then(|a| a.k_star);
        let burn_in = match (self.sim.burn_in, attack_k_star) {
            (Some(b), Some(k)) if k != b + 1 => {
                return Err(Error::Scenario(format!(
                    "attack k_star {k} must equal burn_in + 1 = {}",
                    b + 1
                )));
            }
            (Some(b), _) => b,
            (None, Some(0)) => return Err(Error::Scenario("attack k_star must be ≥ 1".into())),
            (None, Some(k)) => k - 1,
            (None, None) => DEFAULT_BURN_IN,
        };
        let steps = self.sim.steps.unwrap_or(DEFAULT_STEPS);
        let model = Arc::new(model);
        let mut scenario = Scenario::new(model.clone(), detector, steps, burn_in, seed)?
            .with_runs(self.sim.mc_runs.unwrap_or(DEFAULT_RUNS))?;

        if let Some(spec) = &self.attack {
            if let Some(plan) = spec.plan(&model, detector, burn_in + 1)? {
                scenario = scenario.with_attack(plan)?;
            }
        }
        Ok(LoadedScenario {
            scenario,
            cusum_tuning,
            adjustments,
        })
    }
}

impl AttackSpec {
    fn plan(
        &self,
        model: &ClosedLoopModel,
        detector: DetectorConfig,
        k_star: u64,
    ) -> Result<Option<AttackPlan>> {
        let expected = match self.kind {
            AttackKindSpec::None => return Ok(None),
            AttackKindSpec::Chi2 => DetectorKind::ChiSquared,
            AttackKindSpec::Cusum => DetectorKind::Cusum,
            AttackKindSpec::WindowedStatic | AttackKindSpec::WindowedPulse => {
                DetectorKind::Windowed
            }
        };
        if detector.kind() != expected {
            return Err(Error::Scenario(format!(
                "attack kind {:?} does not match the {} detector",
                self.kind,
                detector.kind()
            )));
        }
        let (direction, scale) = self.direction.resolve(model)?;
        let mut plan = AttackPlan::new(detector, k_star, direction)?;
        if let Some(scaling) = self.scaling {
            plan = plan.with_scaling(scaling);
        }
        let mode = self.mode.as_deref();
        match (self.kind, mode) {
            (AttackKindSpec::WindowedPulse, None) => {
                plan = plan.with_saturation(WindowedSaturation::Pulse)?
            }
            (AttackKindSpec::WindowedStatic, None | Some("paper-static")) => {}
            (AttackKindSpec::WindowedStatic, Some("greedy-saturating")) => {
                plan = plan.with_saturation(WindowedSaturation::GreedySaturating)?
            }
            (AttackKindSpec::Cusum, None | Some("verbatim")) => {}
            (AttackKindSpec::Cusum, Some("exact-saturating")) => {
                plan = plan.with_cusum_start(CusumStart::ExactSaturating)
            }
            (AttackKindSpec::Chi2, None) => {}
            (kind, Some(m)) => {
                return Err(Error::Scenario(format!(
                    "mode {m:?} is not valid for attack kind {kind:?}"
                )))
            }
            (_, None) => {}
        }
        Ok(Some(plan.with_scale(scale)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "plant": {"F": [[0.5]], "G": [[1]], "C": [[1]], "R1": [[1]], "R2": [[1]]},
        "controller": {"K": [[-0.25]]},
        "detector": {"kind": "chi2", "far": 0.05},
        "attack": {"kind": "chi2", "direction": "ones", "k_star": 11},
        "sim": {"steps": 100, "seed": 3, "mc_runs": 2}
    }"#;

    #[test]
    fn scalar_file_loads() {
        let file = ScenarioFile::from_json(SCALAR).unwrap();
        let loaded = file.load(0).unwrap();
        let sc = &loaded.scenario;
        assert_eq!(sc.burn_in(), 10);
        assert_eq!(sc.seed(), 3);
        assert!((sc.detector().threshold() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!(sc.attack().is_some());
        assert!(loaded.adjustments.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SCALAR.replace("\"mc_runs\"", "\"runs\"");
        assert!(matches!(
            ScenarioFile::from_json(&text),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn mismatched_attack_is_rejected() {
        let text = SCALAR.replace(
            r#""kind": "chi2", "direction""#,
            r#""kind": "cusum", "direction""#,
        );
        let err = ScenarioFile::from_json(&text).unwrap().load(0).unwrap_err();
        assert!(matches!(err, Error::Scenario(_)), "{err}");
    }

    #[test]
    fn ragged_matrix_is_a_scenario_error() {
        let text = SCALAR.replace(r#""F": [[0.5]]"#, r#""F": [[0.5, 1]]"#);
        let err = ScenarioFile::from_json(&text).unwrap().load(0).unwrap_err();
        assert!(!err.is_instability(), "{err}");
    }

    #[test]
    fn unstable_loop_is_an_instability() {
        let text = SCALAR.replace(r#""K": [[-0.25]]"#, r#""K": [[0.7]]"#);
        let err = ScenarioFile::from_json(&text).unwrap().load(0).unwrap_err();
        assert!(err.is_instability(), "{err}");
    }

    #[test]
    fn reactor_r1_is_repaired() {
        let file = ScenarioFile::from_json(crate::reactor::REACTOR_SCENARIO).unwrap();
        let (_, adjustments) = file.build_model().unwrap();
        assert_eq!(adjustments.len(), 1);
        assert!(adjustments[0].starts_with("R1"));
    }
}
