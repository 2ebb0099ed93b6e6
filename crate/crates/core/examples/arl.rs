//! Average run length of each detector on the attack-free reactor loop.
//!
//! cargo run --release --example arl

use zero_alarm::detectors::{
    estimate_arl, tune_chi2, tune_cusum_tau, tune_windowed, DetectorConfig,
};
use zero_alarm::reactor::reactor_model;

fn main() -> zero_alarm::Result<()> {
    let (model, _) = reactor_model()?;
    let configs = [
        DetectorConfig::ChiSquared {
            alpha: tune_chi2(3, 0.05)?,
        },
        DetectorConfig::Windowed {
            beta: tune_windowed(3, 4, 0.05)?,
            window: 4,
        },
        DetectorConfig::Cusum {
            tau: tune_cusum_tau(&model, 3.0, 0.05, 1_000_000, 1)?.tau,
            bias: 3.0,
        },
    ];
    for cfg in configs {
        let arl = estimate_arl(&model, &cfg, 5000, 1, 1_000_000)?;
        println!(
            "{cfg:?}: ARL {:.2} +/- {:.2}  1/ARL {:.4}",
            arl.arl, arl.half_width, arl.alarm_rate
        );
    }
    Ok(())
}
