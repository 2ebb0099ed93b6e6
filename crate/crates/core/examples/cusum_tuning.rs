//! Monte-Carlo tuning of the CUSUM threshold on the reactor loop, and the
//! rate a hand-picked threshold actually produces.
//!
//! cargo run --release --example cusum_tuning

use zero_alarm::detectors::{alarm_frequency, tune_cusum_tau, DetectorConfig};
use zero_alarm::reactor::{reactor_model, REFERENCE_TAU};

fn main() -> zero_alarm::Result<()> {
    let (model, _) = reactor_model()?;
    for bias in [2.0, 3.0, 4.0, 13.0] {
        let t = tune_cusum_tau(&model, bias, 0.05, 1_000_000, 1)?;
        println!(
            "bias {bias:>4}: tau {:.4}  rate {:.4}  {:?}",
            t.tau, t.achieved_rate, t.diagnostics
        );
    }
    let f = alarm_frequency(
        &model,
        &DetectorConfig::Cusum {
            tau: REFERENCE_TAU,
            bias: 3.0,
        },
        62_500,
        16,
        2,
    )?;
    println!(
        "tau {REFERENCE_TAU}, bias 3: rate {:.4} +/- {:.4}",
        f.rate, f.std_error
    );
    Ok(())
}
