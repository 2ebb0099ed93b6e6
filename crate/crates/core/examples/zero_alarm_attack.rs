//! Runs the worst-case attack against the chi-squared detector on the reactor
//! and compares the measured steady-state deviation with the bound.
//!
//! cargo run --release --example zero_alarm_attack

use std::sync::Arc;

use zero_alarm::attacks::{compute_m, worst_direction, AttackPlan};
use zero_alarm::detectors::{tune_chi2, DetectorConfig};
use zero_alarm::reactor::reactor_model;
use zero_alarm::sim::{measure_steady_deviation, run_ensemble, Scenario};

fn main() -> zero_alarm::Result<()> {
    let model = Arc::new(reactor_model()?.0);
    let nu1 = worst_direction(&compute_m(&model)?).nu1;
    let cfg = DetectorConfig::ChiSquared {
        alpha: tune_chi2(3, 0.05)?,
    };
    let plan = AttackPlan::new(cfg, 51, nu1)?;
    let scenario = Scenario::new(model, cfg, 1000, 50, 1)?
        .with_attack(plan)?
        .with_runs(200)?;

    let ensemble = run_ensemble(&scenario)?;
    let d = measure_steady_deviation(&ensemble, 0.5)?;
    println!(
        "alarms before attack {}",
        ensemble.total_alarms()
            - ensemble
                .summaries
                .iter()
                .map(|s| s.alarms_after_attack)
                .sum::<usize>()
    );
    println!(
        "alarms after attack  {}",
        ensemble
            .summaries
            .iter()
            .map(|s| s.alarms_after_attack)
            .sum::<usize>()
    );
    println!(
        "measured {:.1}  predicted {:.1}  relative error {:.2e}",
        d.measured, d.predicted, d.relative_error
    );

    let first = &ensemble.first;
    for r in first.records.iter().step_by(100) {
        println!("k {:>4}  z {:>8.4}  |x| {:>12.1}", r.k, r.z, r.norm_x);
    }
    Ok(())
}
