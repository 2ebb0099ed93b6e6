//! All four detectors under worst-case and all-ones attacks on the reactor.
//!
//! cargo run --release --example reactor_benchmark

use zero_alarm::reactor::{run_benchmark, BenchmarkConfig};

fn main() -> zero_alarm::Result<()> {
    let bench = run_benchmark(&BenchmarkConfig::default())?;
    let r = &bench.report;
    println!(
        "alpha {:.4}  beta4 {:.4}  beta50 {:.4}  tau {:.4} (bias {})",
        r.thresholds.alpha,
        r.thresholds.beta_short,
        r.thresholds.beta_long,
        r.thresholds.tau,
        r.thresholds.bias
    );
    for case in &bench.cases {
        let c = &case.report;
        println!(
            "{:<20} measured {:>10.1}  predicted {:>10.1}  alarms {:>4} (steady {})",
            case.name(),
            c.deviation.measured,
            c.deviation.predicted,
            c.alarms,
            c.steady_phase_alarms
        );
    }
    println!(
        "worst/ones damage ratio {:.4}  normalized {:.4}",
        r.damage_ratio, r.normalized_damage_ratio
    );
    println!(
        "chi2 > windowed-4 > windowed-50 > cusum: {}",
        r.ordering_holds
    );
    Ok(())
}
