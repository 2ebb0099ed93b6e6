//! Per-step windowed budget beta/ell against the window length; it falls
//! toward the sensor count as the window grows.
//!
//! cargo run --example window_sweep

use zero_alarm::sim::{sweep_window_contours, window_grid};

fn main() -> zero_alarm::Result<()> {
    let fars = [0.01, 0.05, 0.1];
    let rows = sweep_window_contours(1, &fars, &window_grid(10_000))?;
    println!("far,ell,beta_over_ell");
    for r in rows
        .iter()
        .filter(|r| [1, 2, 5, 10, 50, 100, 1000, 10_000].contains(&r.ell))
    {
        println!("{},{},{:.6}", r.far, r.ell, r.beta_over_ell);
    }
    Ok(())
}
