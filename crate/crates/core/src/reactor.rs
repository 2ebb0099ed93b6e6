//! The stirred-tank reactor benchmark.
//!
//! A linearized chemical reactor with heat exchanger: four states, three
//! inputs, three measured outputs. The bundled scenario carries the printed
//! plant, controller and estimator gains. [`run_benchmark`] attacks it with
//! a zero-alarm attack against each of four detectors, once along the
//! worst-case direction and once along the all-ones vector, and compares the
//! measured steady-state deviation with its prediction.

use std::sync::Arc;

use serde::Serialize;

use crate::attacks::{compute_m, worst_direction, AttackDirection, AttackPlan, NamedDirection};
use crate::detectors::{
    alarm_frequency, tune_chi2, tune_cusum_tau, tune_windowed, CusumTuning, DetectorConfig,
    FrequencyEstimate,
};
use crate::error::Result;
use crate::model::ClosedLoopModel;
use crate::scenario::{ScenarioFile, DEFAULT_TUNING_SAMPLES};
use crate::sim::{measure_steady_deviation, run_ensemble, Ensemble, Scenario, SteadyDeviation};

pub const REACTOR_SCENARIO: &str = include_str!("../data/reactor.json");

/// CUSUM threshold reported alongside the reactor's printed gains.
pub const REFERENCE_TAU: f64 = 0.86;

pub fn reactor_file() -> ScenarioFile {
    ScenarioFile::from_json(REACTOR_SCENARIO).expect("bundled reactor scenario parses")
}

/// The reactor loop and the repairs applied to its printed matrices.
pub fn reactor_model() -> Result<(ClosedLoopModel, Vec<String>)> {
    reactor_file().build_model()
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub runs: usize,
    pub steps: u64,
    pub burn_in: u64,
    pub far: f64,
    pub bias: f64,
    pub windows: [usize; 2],
    pub tune_samples: usize,
    /// Steps used to measure alarm rates of the reference CUSUM threshold.
    pub rate_samples: usize,
    pub tail_fraction: f64,
    pub smoothing_window: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 1,
            runs: 200,
            steps: 1000,
            burn_in: 50,
            far: 0.05,
            bias: 3.0,
            windows: [4, 50],
            tune_samples: DEFAULT_TUNING_SAMPLES,
            rate_samples: 1_000_000,
            tail_fraction: 0.5,
            smoothing_window: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub beta_short: f64,
    pub beta_long: f64,
    pub windows: [usize; 2],
    pub bias: f64,
    pub tau: f64,
    pub cusum_tuning: CusumTuning,
    pub reference_tau: f64,
    /// Attack-free per-step alarm rate of CUSUM at `reference_tau`.
    pub reference_tau_rate: FrequencyEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heading {
    Worst,
    Ones,
}

impl Heading {
    fn direction(self) -> AttackDirection {
        match self {
            Heading::Worst => AttackDirection::Named(NamedDirection::Worst),
            Heading::Ones => AttackDirection::Named(NamedDirection::OnesRaw),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Heading::Worst => "worst",
            Heading::Ones => "ones",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    /// `chi2`, `windowed-4`, `windowed-50` or `cusum`.
    pub detector_label: String,
    pub heading: Heading,
    pub detector: DetectorConfig,
    /// `‖ψ‖` in steady state.
    pub magnitude: f64,
    pub deviation: SteadyDeviation,
    pub alarms: usize,
    pub steady_phase_alarms: usize,
    pub runs_with_alarms: usize,
}

/// One attacked configuration with its ensemble.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub report: CaseReport,
    pub ensemble: Ensemble,
}

impl BenchmarkCase {
    /// File stem for this case's trace, e.g. `windowed-4_worst`.
    pub fn name(&self) -> String {
        format!(
            "{}_{}",
            self.report.detector_label,
            self.report.heading.label()
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub k_star: u64,
    pub thresholds: Thresholds,
    pub nu1: Vec<f64>,
    pub lambda1: f64,
    pub m: Vec<Vec<f64>>,
    pub cases: Vec<CaseReport>,
    /// Measured chi-squared deviation, worst direction over the all-ones attack.
    pub damage_ratio: f64,
    pub predicted_damage_ratio: f64,
    /// `‖M ν1‖ / ‖M 𝟙/√p‖`, both at full budget.
    pub normalized_damage_ratio: f64,
    /// Measured worst-case deviations, in detector order.
    pub ordering: Vec<(String, f64)>,
    pub ordering_holds: bool,
    pub adjustments: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub report: BenchmarkReport,
    pub cases: Vec<BenchmarkCase>,
}

fn detector_label(config: &DetectorConfig) -> String {
    match config {
        DetectorConfig::ChiSquared { .. } => "chi2".into(),
        DetectorConfig::Windowed { window, .. } => format!("windowed-{window}"),
        DetectorConfig::Cusum { .. } => "cusum".into(),
    }
}

/// Tunes every detector, then runs all eight attacked ensembles.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Benchmark> {
    let (model, adjustments) = reactor_model()?;
    let model = Arc::new(model);
    let p = model.p();
    let [short, long] = config.windows;

    let alpha = tune_chi2(p, config.far)?;
    let beta_short = tune_windowed(p, short, config.far)?;
    let beta_long = tune_windowed(p, long, config.far)?;
    let cusum_tuning = tune_cusum_tau(
        &model,
        config.bias,
        config.far,
        config.tune_samples,
        config.seed,
    )?;
    let reference = DetectorConfig::Cusum {
        tau: REFERENCE_TAU,
        bias: config.bias,
    };
    let chunks = 16;
    let reference_tau_rate = alarm_frequency(
        &model,
        &reference,
        config.rate_samples.div_ceil(chunks),
        chunks,
        config.seed,
    )?;

    let detectors = [
        DetectorConfig::ChiSquared { alpha },
        DetectorConfig::Windowed {
            beta: beta_short,
            window: short,
        },
        DetectorConfig::Windowed {
            beta: beta_long,
            window: long,
        },
        DetectorConfig::Cusum {
            tau: cusum_tuning.tau,
            bias: config.bias,
        },
    ];

    let m = compute_m(&model)?;
    let worst = worst_direction(&m);
    let k_star = config.burn_in + 1;

    let mut cases = Vec::with_capacity(8);
    for detector in detectors {
        for heading in [Heading::Worst, Heading::Ones] {
            let (direction, scale) = heading.direction().resolve(&model)?;
            let plan = AttackPlan::new(detector, k_star, direction)?.with_scale(scale)?;
            let scenario = Scenario::new(
                model.clone(),
                detector,
                config.steps,
                config.burn_in,
                config.seed,
            )?
            .with_runs(config.runs)?
            .with_attack(plan.clone())?;
            let ensemble = run_ensemble(&scenario)?;
            let deviation = measure_steady_deviation(&ensemble, config.tail_fraction)?;
            let report = CaseReport {
                detector_label: detector_label(&detector),
                heading,
                detector,
                magnitude: plan.steady_magnitude(),
                deviation,
                alarms: ensemble.total_alarms(),
                steady_phase_alarms: ensemble.steady_phase_alarms(),
                runs_with_alarms: ensemble.summaries.iter().filter(|s| s.alarms > 0).count(),
            };
            cases.push(BenchmarkCase { report, ensemble });
        }
    }

    let find = |label: &str, heading: Heading| {
        cases
            .iter()
            .find(|c| c.report.detector_label == label && c.report.heading == heading)
            .map(|c| c.report.deviation)
            .expect("case exists")
    };
    let chi_worst = find("chi2", Heading::Worst);
    let chi_ones = find("chi2", Heading::Ones);
    let ones = crate::attacks::ones_direction(p);
    let normalized_damage_ratio = (&m * &worst.nu1).norm() / (&m * &ones).norm();

    let ordering: Vec<(String, f64)> = cases
        .iter()
        .filter(|c| c.report.heading == Heading::Worst)
        .map(|c| (c.report.detector_label.clone(), c.report.deviation.measured))
        .collect();
    let ordering_holds = ordering.windows(2).all(|w| w[0].1 > w[1].1);

    let report = BenchmarkReport {
        config: config.clone(),
        k_star,
        thresholds: Thresholds {
            alpha,
            beta_short,
            beta_long,
            windows: config.windows,
            bias: config.bias,
            tau: cusum_tuning.tau,
            cusum_tuning,
            reference_tau: REFERENCE_TAU,
            reference_tau_rate,
        },
        nu1: worst.nu1.iter().copied().collect(),
        lambda1: worst.lambda1,
        m: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        cases: cases.iter().map(|c| c.report.clone()).collect(),
        damage_ratio: chi_worst.measured / chi_ones.measured,
        predicted_damage_ratio: chi_worst.predicted / chi_ones.predicted,
        normalized_damage_ratio,
        ordering,
        ordering_holds,
        adjustments,
    };
    Ok(Benchmark { report, cases })
}
