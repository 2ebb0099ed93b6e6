//! The sensitivity matrix M of the reactor loop, its worst attack direction
//! and the deviation bound each detector allows along it.
//!
//! cargo run --example worst_case_direction

use zero_alarm::attacks::{compute_m, gamma_bound, ones_direction, worst_direction};
use zero_alarm::detectors::{tune_chi2, tune_windowed, DetectorConfig};
use zero_alarm::reactor::reactor_model;

fn main() -> zero_alarm::Result<()> {
    let (model, _) = reactor_model()?;
    let m = compute_m(&model)?;
    let worst = worst_direction(&m);
    println!("M = {m}");
    println!("lambda1 = {:.6e}", worst.lambda1);
    println!("nu1 = {:?}", worst.nu1.as_slice());

    let detectors = [
        (
            "chi2",
            DetectorConfig::ChiSquared {
                alpha: tune_chi2(3, 0.05)?,
            },
        ),
        (
            "windowed-4",
            DetectorConfig::Windowed {
                beta: tune_windowed(3, 4, 0.05)?,
                window: 4,
            },
        ),
        (
            "windowed-50",
            DetectorConfig::Windowed {
                beta: tune_windowed(3, 50, 0.05)?,
                window: 50,
            },
        ),
        (
            "cusum",
            DetectorConfig::Cusum {
                tau: 7.4,
                bias: 3.0,
            },
        ),
    ];
    let ones = ones_direction(3);
    for (name, cfg) in detectors {
        let w = gamma_bound(&model, &cfg, &worst.nu1)?;
        let o = gamma_bound(&model, &cfg, &ones)?;
        println!(
            "{name:>11}: gamma worst {:.1}  ones {:.1}  ratio {:.4}",
            w.gamma,
            o.gamma,
            w.gamma / o.gamma
        );
    }
    Ok(())
}
