//! The `zero-alarm` command line.
//!
//! ```text
//! zero-alarm tune     --detector chi2|windowed|cusum --sensors P [--window L] --far A [--scenario FILE --mc N --seed S]
//! zero-alarm simulate --scenario FILE --out trace.csv [--summary summary.json] [--seed S]
//! zero-alarm sweep    --sensors P --far A1,A2,.. --ell-max L --out contours.csv
//! zero-alarm reactor  --out-dir DIR [--seed S] [--runs N]
//! zero-alarm arl      --scenario FILE [--runs N] [--cap K] [--seed S]
//! ```
//!
//! The seed is taken from `--seed`, then the scenario file, then `RS_SEED`,
//! then 0. Exit status is 2 for bad flags, bad input files and domain
//! errors, 3 when the model is unstable, and 1 for I/O failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::detectors::{
    alarm_frequency, estimate_arl, tune_chi2, tune_cusum_tau, tune_windowed, DetectorConfig,
    DEFAULT_RUN_LENGTH_CAP,
};
use crate::error::{Error, Result};
use crate::reactor::{run_benchmark, BenchmarkConfig};
use crate::scenario::{ScenarioFile, DEFAULT_TUNING_SAMPLES};
use crate::sim::{
    measure_steady_deviation, moving_average, run_ensemble, sweep_window_contours, tail_mean_norm,
    window_grid, SimulationTrace, DEFAULT_TAIL_FRACTION,
};

pub const SEED_ENV: &str = "RS_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "zero-alarm",
    version,
    about = "Residual detectors and zero-alarm sensor attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectorArg {
    Chi2,
    Windowed,
    Cusum,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold for a target false-alarm rate.
    Tune {
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long)]
        sensors: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        far: f64,
        /// CUSUM bias; defaults to the sensor count.
        #[arg(long)]
        bias: Option<f64>,
        /// Loop model for Monte-Carlo CUSUM tuning.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TUNING_SAMPLES)]
        mc: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Runs a scenario file and writes the first replica's trace.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Windowed threshold per step, beta/ell, against window length.
    Sweep {
        #[arg(long, default_value_t = 1)]
        sensors: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        far: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        ell_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// The reactor benchmark: four detectors, worst-case and all-ones attacks.
    Reactor {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, default_value_t = DEFAULT_TUNING_SAMPLES)]
        tune_samples: usize,
    },
    /// Average run length and per-step alarm rate of a scenario's detector.
    Arl {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 2000)]
        runs: usize,
        #[arg(long, default_value_t = DEFAULT_RUN_LENGTH_CAP)]
        cap: u64,
        /// Attack-free steps for the per-step rate.
        #[arg(long, default_value_t = 1_000_000)]
        rate_steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Runs the CLI on `args` (including the program name) with the process's
/// standard streams and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                2
            } else {
                let _ = write!(out, "{e}");
                0
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_instability() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            Error::Domain(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))
        }),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    Ok(env_seed()?.unwrap_or(0))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Tune {
            detector,
            sensors,
            window,
            far,
            bias,
            scenario,
            mc,
            seed,
        } => {
            let value = cmd_tune(
                detector,
                sensors,
                window,
                far,
                bias,
                scenario.as_deref(),
                mc,
                seed,
            )?;
            writeln!(out, "{}", serde_json::to_string(&value)?)?;
        }
        Command::Simulate {
            scenario,
            out: trace,
            summary,
            seed,
        } => {
            let value = cmd_simulate(&scenario, &trace, seed)?;
            match summary {
                Some(path) => write_json(&path, &value)?,
                None => writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?,
            }
        }
        Command::Sweep {
            sensors,
            far,
            ell_max,
            out: path,
        } => cmd_sweep(sensors, &far, ell_max, &path)?,
        Command::Reactor {
            out_dir,
            seed,
            runs,
            tune_samples,
        } => {
            let summary = cmd_reactor(&out_dir, seed, runs, tune_samples)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Arl {
            scenario,
            runs,
            cap,
            rate_steps,
            seed,
        } => {
            let value = cmd_arl(&scenario, runs, cap, rate_steps, seed)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_tune(
    detector: DetectorArg,
    sensors: Option<usize>,
    window: Option<usize>,
    far: f64,
    bias: Option<f64>,
    scenario: Option<&Path>,
    mc: usize,
    seed: Option<u64>,
) -> Result<Value> {
    let file = scenario.map(ScenarioFile::from_path).transpose()?;
    let model = file.as_ref().map(|f| f.build_model()).transpose()?;
    let sensors = match (sensors, &model) {
        (Some(p), Some((m, _))) if p != m.p() => {
            return Err(Error::Domain(format!(
                "--sensors {p} disagrees with the scenario's {} sensors",
                m.p()
            )));
        }
        (Some(p), _) => p,
        (None, Some((m, _))) => m.p(),
        (None, None) => {
            return Err(Error::Domain(
                "--sensors is required without --scenario".into(),
            ))
        }
    };
    match detector {
        DetectorArg::Chi2 => {
            let alpha = tune_chi2(sensors, far)?;
            Ok(
                json!({"detector": "chi2", "params": {"sensors": sensors}, "threshold": alpha, "far": far}),
            )
        }
        DetectorArg::Windowed => {
            let window = window.ok_or_else(|| {
                Error::Domain("--window is required for the windowed detector".into())
            })?;
            let beta = tune_windowed(sensors, window, far)?;
            Ok(json!({
                "detector": "windowed",
                "params": {"sensors": sensors, "window": window},
                "threshold": beta,
                "far": far
            }))
        }
        DetectorArg::Cusum => {
            let (model, _) =
                model.ok_or_else(|| Error::Domain("cusum tuning needs --scenario".into()))?;
            let bias = bias.unwrap_or(sensors as f64);
            let seed = resolve_seed(seed, file.as_ref().and_then(|f| f.sim.seed))?;
            let tuning = tune_cusum_tau(&model, bias, far, mc, seed)?;
            Ok(json!({
                "detector": "cusum",
                "params": {
                    "sensors": sensors,
                    "bias": bias,
                    "samples": tuning.samples,
                    "seed": seed,
                    "achieved_rate": tuning.achieved_rate,
                    "diagnostics": tuning.diagnostics,
                },
                "threshold": tuning.tau,
                "far": far
            }))
        }
    }
}

/// Shortest round-trip decimal of `x` rounded to 12 significant digits.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if rounded == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub const TRACE_HEADER: &str = "k,norm_x,z,stat,alarm,attack_active";

/// Writes a trace as CSV with [`TRACE_HEADER`] columns.
pub fn write_trace_csv(w: &mut dyn Write, trace: &SimulationTrace) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.k,
            format_number(r.norm_x),
            format_number(r.z),
            format_number(r.stat),
            u8::from(r.alarm),
            u8::from(r.attack_active)
        )?;
    }
    Ok(())
}

fn cmd_simulate(path: &Path, trace_path: &Path, seed: Option<u64>) -> Result<Value> {
    let file = ScenarioFile::from_path(path)?;
    let seed = resolve_seed(seed, file.sim.seed)?;
    let mut file = file;
    file.sim.seed = Some(seed);
    let loaded = file.load(seed)?;
    let scenario = &loaded.scenario;
    let ensemble = run_ensemble(scenario)?;

    let mut w = BufWriter::new(File::create(trace_path)?);
    write_trace_csv(&mut w, &ensemble.first)?;
    w.flush()?;

    let attacked = scenario.attack().is_some() && scenario.steps() > scenario.burn_in();
    let (measured, predicted, relative_error) = if attacked {
        let d = measure_steady_deviation(&ensemble, DEFAULT_TAIL_FRACTION)?;
        (Some(d.measured), Some(d.predicted), Some(d.relative_error))
    } else if scenario.steps() > 0 {
        let (m, _) = tail_mean_norm(&ensemble, DEFAULT_TAIL_FRACTION)?;
        (Some(m), None, None)
    } else {
        (None, None, None)
    };
    let total_steps = scenario.steps() as f64 * ensemble.runs() as f64;
    Ok(json!({
        "alarms": ensemble.first.summary.alarms,
        "measured_deviation": measured,
        "predicted_gamma": predicted,
        "relative_error": relative_error,
        "detector": scenario.detector(),
        "attack": scenario.attack().map(|a| a.kind()),
        "steps": scenario.steps(),
        "burn_in": scenario.burn_in(),
        "k_star": scenario.k_star(),
        "seed": seed,
        "runs": ensemble.runs(),
        "ensemble_alarms": ensemble.total_alarms(),
        "ensemble_alarm_rate": if total_steps > 0.0 { Some(ensemble.total_alarms() as f64 / total_steps) } else { None },
        "steady_phase_alarms": ensemble.steady_phase_alarms(),
        "cusum_tuning": loaded.cusum_tuning,
        "adjustments": loaded.adjustments,
    }))
}

fn cmd_sweep(sensors: usize, fars: &[f64], ell_max: usize, path: &Path) -> Result<()> {
    if ell_max == 0 {
        return Err(Error::Domain("--ell-max must be ≥ 1".into()));
    }
    if let Some(bad) = fars.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Domain(format!(
            "false-alarm rate must lie in (0, 1), got {bad}"
        )));
    }
    let rows = sweep_window_contours(sensors, fars, &window_grid(ell_max))?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "far,ell,beta,beta_over_ell")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            format_number(r.far),
            r.ell,
            format_number(r.beta),
            format_number(r.beta_over_ell)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_reactor(dir: &Path, seed: Option<u64>, runs: usize, tune_samples: usize) -> Result<Value> {
    std::fs::create_dir_all(dir)?;
    let defaults = BenchmarkConfig::default();
    let config = BenchmarkConfig {
        seed: match seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(defaults.seed),
        },
        runs,
        tune_samples,
        ..defaults
    };
    let bench = run_benchmark(&config)?;
    for case in &bench.cases {
        let path = dir.join(format!("{}.csv", case.name()));
        let mut w = BufWriter::new(File::create(path)?);
        write_benchmark_trace(&mut w, case, config.smoothing_window)?;
        w.flush()?;
    }
    write_json(&dir.join("report.json"), &bench.report)?;
    Ok(json!({
        "out_dir": dir,
        "thresholds": {
            "alpha": bench.report.thresholds.alpha,
            "beta_short": bench.report.thresholds.beta_short,
            "beta_long": bench.report.thresholds.beta_long,
            "bias": bench.report.thresholds.bias,
            "tau": bench.report.thresholds.tau,
        },
        "damage_ratio": bench.report.damage_ratio,
        "ordering_holds": bench.report.ordering_holds,
    }))
}

/// Trace columns plus the smoothed single-run norm and the ensemble-mean norm.
fn write_benchmark_trace(
    w: &mut dyn Write,
    case: &crate::reactor::BenchmarkCase,
    smoothing: usize,
) -> Result<()> {
    let first = &case.ensemble.first;
    let smoothed = moving_average(&first.norms(), smoothing)?;
    writeln!(w, "{TRACE_HEADER},norm_x_smoothed,mean_norm_x")?;
    for ((r, s), mean) in first
        .records
        .iter()
        .zip(&smoothed)
        .zip(&case.ensemble.mean_x)
    {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.k,
            format_number(r.norm_x),
            format_number(r.z),
            format_number(r.stat),
            u8::from(r.alarm),
            u8::from(r.attack_active),
            format_number(*s),
            format_number(mean.norm())
        )?;
    }
    Ok(())
}

fn cmd_arl(
    path: &Path,
    runs: usize,
    cap: u64,
    rate_steps: usize,
    seed: Option<u64>,
) -> Result<Value> {
    let file = ScenarioFile::from_path(path)?;
    let seed = resolve_seed(seed, file.sim.seed)?;
    let loaded = file.load(seed)?;
    let model = loaded.scenario.model();
    let config: DetectorConfig = *loaded.scenario.detector();
    let arl = estimate_arl(model, &config, runs, seed, cap)?;
    let chunks = 16;
    let rate = alarm_frequency(
        model,
        &config,
        rate_steps.div_ceil(chunks).max(1),
        chunks,
        seed,
    )?;
    let mut warnings = Vec::new();
    if arl.is_censored() {
        warnings.push(format!(
            "{} of {} runs reached the cap of {} steps without an alarm",
            arl.censored_runs, arl.runs, cap
        ));
    }
    Ok(json!({
        "detector": config,
        "seed": seed,
        "arl": arl,
        "per_step": rate,
        "warnings": warnings,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(7.814_727_903_251_179), "7.81472790325");
        assert_eq!(format_number(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(format_number(1e-20), "1e-20");
        assert_eq!(format_number(123_456_789_012_345.0), "123456789012000");
        assert_eq!(format_number(1234.0), "1234");
    }

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(
            std::iter::once("zero-alarm").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn tune_chi2_prints_json() {
        let (code, out, _) = run_capture(&[
            "tune",
            "--detector",
            "chi2",
            "--sensors",
            "3",
            "--far",
            "0.05",
        ]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["threshold"].as_f64().unwrap() - 7.81).abs() < 0.01);
    }

    #[test]
    fn zero_window_exits_two() {
        let (code, _, err) = run_capture(&[
            "tune",
            "--detector",
            "windowed",
            "--sensors",
            "3",
            "--window",
            "0",
            "--far",
            "0.05",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("window must be ≥ 1"), "{err}");
    }

    #[test]
    fn unknown_flag_exits_two() {
        let (code, _, _) = run_capture(&["tune", "--bogus"]);
        assert_eq!(code, 2);
    }
}
