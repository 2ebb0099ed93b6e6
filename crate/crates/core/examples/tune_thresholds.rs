//! Static and windowed chi-squared thresholds for a target false-alarm rate.
//!
//! cargo run --example tune_thresholds

use zero_alarm::detectors::{tune_chi2, tune_windowed};

fn main() -> zero_alarm::Result<()> {
    let sensors = 3;
    for far in [0.01, 0.05, 0.1] {
        println!("far {far}: alpha {:.4}", tune_chi2(sensors, far)?);
        for window in [4, 50] {
            println!(
                "  window {window:>2}: beta {:.4}",
                tune_windowed(sensors, window, far)?
            );
        }
    }
    Ok(())
}
