//! Single runs, Monte-Carlo ensembles and steady-state measurements.
//!
//! Run `i` of seed `s` draws its noise from ChaCha stream `i`, and ensemble
//! reductions happen in run order, so results do not depend on how rayon
//! schedules the runs.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::attacks::{compute_m, AttackPlan, DeviationBound};
use crate::detectors::{tune_windowed, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::model::{ClosedLoopModel, LoopState, NoiseModel};
use crate::numerics::Vector;

pub const DEFAULT_STEPS: u64 = 1000;
pub const DEFAULT_BURN_IN: u64 = 50;
pub const DEFAULT_RUNS: usize = 200;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// Attack-free distance measures `z_k` from a loop started at the origin.
/// The first `burn_in` steps are discarded.
pub struct AttackFreeStream<'a> {
    model: &'a ClosedLoopModel,
    state: LoopState,
    noise: NoiseModel,
    zero: Vector,
}

impl<'a> AttackFreeStream<'a> {
    pub fn new(model: &'a ClosedLoopModel, seed: u64, stream: u64, burn_in: usize) -> Self {
        let mut s = AttackFreeStream {
            model,
            state: LoopState::origin(model.n()),
            noise: NoiseModel::new(model.plant(), seed, stream),
            zero: Vector::zeros(model.p()),
        };
        for _ in 0..burn_in {
            s.next();
        }
        s
    }
}

impl Iterator for AttackFreeStream<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let w = self.noise.sample();
        let out = self.model.step(&self.state, &w, &self.zero);
        self.state = out.next;
        Some(out.z)
    }
}

pub fn attack_free_distances(
    model: &ClosedLoopModel,
    steps: usize,
    burn_in: usize,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    AttackFreeStream::new(model, seed, stream, burn_in)
        .take(steps)
        .collect()
}

/// One experiment: a loop, a detector, an optional attack starting at
/// `burn_in + 1`, and the Monte-Carlo budget.
#[derive(Debug, Clone)]
pub struct Scenario {
    model: Arc<ClosedLoopModel>,
    detector: DetectorConfig,
    attack: Option<AttackPlan>,
    steps: u64,
    burn_in: u64,
    seed: u64,
    mc_runs: usize,
    initial: Option<(Vector, Vector)>,
}

impl Scenario {
    pub fn new(
        model: Arc<ClosedLoopModel>,
        detector: DetectorConfig,
        steps: u64,
        burn_in: u64,
        seed: u64,
    ) -> Result<Self> {
        detector.validate()?;
        if steps > 0 && burn_in >= steps {
            return Err(Error::Scenario(format!(
                "burn-in {burn_in} must be shorter than the run ({steps} steps)"
            )));
        }
        Ok(Scenario {
            model,
            detector,
            attack: None,
            steps,
            burn_in,
            seed,
            mc_runs: DEFAULT_RUNS,
            initial: None,
        })
    }

    /// Attaches an attack; its `k*` must equal `burn_in + 1` and it must
    /// target this scenario's detector.
    pub fn with_attack(mut self, plan: AttackPlan) -> Result<Self> {
        if plan.k_star() != self.k_star() {
            return Err(Error::Scenario(format!(
                "attack starts at {} but burn-in ends at {}",
                plan.k_star(),
                self.burn_in
            )));
        }
        if *plan.target() != self.detector {
            return Err(Error::Scenario(
                "attack targets a different detector than the scenario runs".into(),
            ));
        }
        if plan.direction().len() != self.model.p() {
            return Err(Error::dim(
                "attack direction",
                self.model.p(),
                plan.direction().len(),
            ));
        }
        self.attack = Some(plan);
        Ok(self)
    }

    pub fn with_runs(mut self, runs: usize) -> Result<Self> {
        if runs == 0 {
            return Err(Error::Scenario("mc_runs must be ≥ 1".into()));
        }
        self.mc_runs = runs;
        Ok(self)
    }

    pub fn with_initial_state(mut self, x0: Vector, xhat0: Vector) -> Result<Self> {
        let n = self.model.n();
        if x0.len() != n || xhat0.len() != n {
            return Err(Error::dim("initial state", n, x0.len().max(xhat0.len())));
        }
        self.initial = Some((x0, xhat0));
        Ok(self)
    }

    pub fn model(&self) -> &ClosedLoopModel {
        &self.model
    }
    pub fn detector(&self) -> &DetectorConfig {
        &self.detector
    }
    pub fn attack(&self) -> Option<&AttackPlan> {
        self.attack.as_ref()
    }
    pub fn steps(&self) -> u64 {
        self.steps
    }
    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn mc_runs(&self) -> usize {
        self.mc_runs
    }
    pub fn k_star(&self) -> u64 {
        self.burn_in + 1
    }

    /// First step from which the attacked statistic is fully saturated.
    pub fn steady_phase_start(&self) -> u64 {
        match self.detector {
            DetectorConfig::ChiSquared { .. } => self.k_star(),
            DetectorConfig::Windowed { window, .. } => self.k_star() + window as u64 - 1,
            DetectorConfig::Cusum { .. } => self.k_star() + 1,
        }
    }

    /// Predicted deviation for the attack, if any.
    pub fn prediction(&self) -> Result<Option<DeviationBound>> {
        match &self.attack {
            None => Ok(None),
            Some(plan) => Ok(Some(plan.deviation_bound(&compute_m(&self.model)?))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub k: u64,
    pub norm_x: f64,
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub r: Vec<f64>,
    pub z: f64,
    /// Detector statistic after processing `z`.
    pub stat: f64,
    /// The detector declared an alarm time at this step.
    pub alarm: bool,
    pub attack_active: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TraceSummary {
    pub alarms: usize,
    pub alarms_after_attack: usize,
    pub steady_phase_alarms: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationTrace {
    pub run: u64,
    pub records: Vec<StepRecord>,
    pub summary: TraceSummary,
}

impl SimulationTrace {
    pub fn norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.norm_x).collect()
    }

    /// Trailing moving average of `‖x_k‖`.
    pub fn smoothed_norm(&self, window: usize) -> Result<Vec<f64>> {
        moving_average(&self.norms(), window)
    }
}

/// Runs the first replica of `scenario`.
pub fn run(scenario: &Scenario) -> Result<SimulationTrace> {
    run_replica(scenario, 0)
}

/// Runs replica `index`, drawing noise from stream `index` of the scenario seed.
pub fn run_replica(scenario: &Scenario, index: u64) -> Result<SimulationTrace> {
    let model = scenario.model();
    let mut detector = Detector::new(scenario.detector())?;
    let mut noise = NoiseModel::new(model.plant(), scenario.seed(), index);
    let mut state = match &scenario.initial {
        Some((x0, xhat0)) => LoopState::new(x0.clone(), xhat0.clone()),
        None => LoopState::origin(model.n()),
    };
    let mut records: Vec<StepRecord> = Vec::with_capacity(scenario.steps() as usize);
    let mut alarm_steps = Vec::new();
    let zero = Vector::zeros(model.p());

    for k in 1..=scenario.steps() {
        let w = noise.sample();
        let (delta, active) = match scenario.attack() {
            Some(plan) if plan.is_active(k) => {
                (plan.synthesize(model, &state.e, &w.eta, &detector, k), true)
            }
            _ => (zero.clone(), false),
        };
        let out = model.step(&state, &w, &delta);
        let alarm = detector.update(out.z, k);
        records.push(StepRecord {
            k,
            norm_x: state.x.norm(),
            x: state.x.iter().copied().collect(),
            e: state.e.iter().copied().collect(),
            r: out.residual.iter().copied().collect(),
            z: out.z,
            stat: detector.statistic(),
            alarm: false,
            attack_active: active,
        });
        if let Some(ev) = alarm {
            // CUSUM reports the previous step as the alarm time
            if let Some(rec) = records.iter_mut().rev().find(|r| r.k == ev.k_star) {
                rec.alarm = true;
            }
            alarm_steps.push(ev.k_star);
        }
        state = out.next;
    }

    let k_star = scenario.k_star();
    let steady = scenario.steady_phase_start();
    let has_attack = scenario.attack().is_some();
    let summary = TraceSummary {
        alarms: alarm_steps.len(),
        alarms_after_attack: if has_attack {
            alarm_steps.iter().filter(|&&k| k >= k_star).count()
        } else {
            0
        },
        steady_phase_alarms: if has_attack {
            alarm_steps.iter().filter(|&&k| k >= steady).count()
        } else {
            0
        },
    };
    Ok(SimulationTrace {
        run: index,
        records,
        summary,
    })
}

/// Aggregate of `mc_runs` replicas.
#[derive(Debug, Clone)]
pub struct Ensemble {
    /// Ensemble mean of `x_k` for each step.
    pub mean_x: Vec<Vector>,
    pub summaries: Vec<TraceSummary>,
    /// Replica 0 in full.
    pub first: SimulationTrace,
    pub k_star: u64,
    pub steps: u64,
    pub prediction: Option<DeviationBound>,
}

impl Ensemble {
    pub fn total_alarms(&self) -> usize {
        self.summaries.iter().map(|s| s.alarms).sum()
    }
    pub fn steady_phase_alarms(&self) -> usize {
        self.summaries.iter().map(|s| s.steady_phase_alarms).sum()
    }
    pub fn runs(&self) -> usize {
        self.summaries.len()
    }
}

pub fn run_ensemble(scenario: &Scenario) -> Result<Ensemble> {
    let prediction = scenario.prediction()?;
    let traces: Vec<(Vec<Vector>, TraceSummary, Option<SimulationTrace>)> = (0..scenario.mc_runs()
        as u64)
        .into_par_iter()
        .map(|i| {
            let trace = run_replica(scenario, i)?;
            let xs = trace
                .records
                .iter()
                .map(|r| Vector::from_column_slice(&r.x))
                .collect();
            let summary = trace.summary.clone();
            Ok((xs, summary, (i == 0).then_some(trace)))
        })
        .collect::<Result<_>>()?;

    let n = scenario.model().n();
    let steps = scenario.steps() as usize;
    let mut sum = vec![Vector::zeros(n); steps];
    let mut summaries = Vec::with_capacity(traces.len());
    let mut first = None;
    for (xs, summary, trace) in traces {
        for (acc, x) in sum.iter_mut().zip(&xs) {
            *acc += x;
        }
        summaries.push(summary);
        if trace.is_some() {
            first = trace;
        }
    }
    let runs = summaries.len() as f64;
    let mean_x = sum.into_iter().map(|s| s / runs).collect();
    Ok(Ensemble {
        mean_x,
        summaries,
        first: first.expect("at least one replica"),
        k_star: scenario.k_star(),
        steps: scenario.steps(),
        prediction,
    })
}

/// Trailing mean over the last `min(k, window)` samples; same length as the input.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::domain("moving-average window must be ≥ 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, v) in series.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= series[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SteadyDeviation {
    /// `‖mean of x_k over replicas and tail steps‖`.
    pub measured: f64,
    pub predicted: f64,
    /// `|measured - predicted| / predicted`; absolute error when the prediction is 0.
    pub relative_error: f64,
    pub tail_steps: usize,
}

/// Norm of the ensemble-mean state over the last `tail_fraction` of the
/// post-attack steps.
pub fn tail_mean_norm(ensemble: &Ensemble, tail_fraction: f64) -> Result<(f64, usize)> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let first_attacked = (ensemble.k_star as usize)
        .saturating_sub(1)
        .min(ensemble.mean_x.len());
    let attacked = &ensemble.mean_x[first_attacked..];
    if attacked.is_empty() {
        return Err(Error::Scenario("no post-attack steps to measure".into()));
    }
    let tail = ((attacked.len() as f64 * tail_fraction).ceil() as usize).clamp(1, attacked.len());
    let slice = &attacked[attacked.len() - tail..];
    let n = slice[0].len();
    let mean = slice.iter().fold(Vector::zeros(n), |acc, x| acc + x) / tail as f64;
    Ok((mean.norm(), tail))
}

pub fn measure_steady_deviation(
    ensemble: &Ensemble,
    tail_fraction: f64,
) -> Result<SteadyDeviation> {
    let predicted = ensemble
        .prediction
        .as_ref()
        .ok_or(Error::NoPrediction)?
        .gamma;
    let (measured, tail_steps) = tail_mean_norm(ensemble, tail_fraction)?;
    let relative_error = if predicted > 0.0 {
        (measured - predicted).abs() / predicted
    } else {
        measured
    };
    Ok(SteadyDeviation {
        measured,
        predicted,
        relative_error,
        tail_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourRow {
    pub far: f64,
    pub ell: usize,
    pub beta: f64,
    pub beta_over_ell: f64,
}

/// Window lengths `1..=min(100, max)`, then about 40 per decade up to `max`.
pub fn window_grid(max: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=max.min(100)).collect();
    if max > 100 {
        let per_decade = 40.0;
        let mut i = 1.0;
        loop {
            let ell = (100.0 * 10f64.powf(i / per_decade)).round() as usize;
            if ell >= max {
                break;
            }
            if grid.last() != Some(&ell) {
                grid.push(ell);
            }
            i += 1.0;
        }
        grid.push(max);
    }
    grid
}

/// `β(ℓ)/ℓ` for every rate and window length, rows grouped by rate.
pub fn sweep_window_contours(
    sensors: usize,
    fars: &[f64],
    windows: &[usize],
) -> Result<Vec<ContourRow>> {
    let mut rows = Vec::with_capacity(fars.len() * windows.len());
    for &far in fars {
        for &ell in windows {
            let beta = tune_windowed(sensors, ell, far)?;
            rows.push(ContourRow {
                far,
                ell,
                beta,
                beta_over_ell: beta / ell as f64,
            });
        }
    }
    Ok(rows)
}
