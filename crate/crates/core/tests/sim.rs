use std::sync::Arc;

use proptest::prelude::*;

use zero_alarm::attacks::{compute_m, worst_direction, AttackPlan};
use zero_alarm::detectors::{tune_chi2, DetectorConfig};
use zero_alarm::model::{ClosedLoopModel, PlantModel};
use zero_alarm::numerics::{Matrix, Vector};
use zero_alarm::reactor::reactor_model;
use zero_alarm::sim::{
    measure_steady_deviation, moving_average, run, run_ensemble, run_replica, tail_mean_norm,
    Scenario,
};

fn reactor() -> Arc<ClosedLoopModel> {
    Arc::new(reactor_model().unwrap().0)
}

fn attacked(cfg: DetectorConfig, runs: usize) -> Scenario {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let plan = AttackPlan::new(cfg, 51, nu1).unwrap();
    Scenario::new(model, cfg, 1000, 50, 8)
        .unwrap()
        .with_attack(plan)
        .unwrap()
        .with_runs(runs)
        .unwrap()
}

#[test]
fn attacked_mean_is_stationary() {
    let cfg = DetectorConfig::ChiSquared {
        alpha: tune_chi2(3, 0.05).unwrap(),
    };
    let ens = run_ensemble(&attacked(cfg, 200)).unwrap();
    let (late, _) = tail_mean_norm(&ens, 0.1).unwrap();
    let (half, _) = tail_mean_norm(&ens, 0.5).unwrap();
    assert!((late - half).abs() / half <= 0.02, "{late} vs {half}");
    let d = measure_steady_deviation(&ens, 0.5).unwrap();
    assert!(d.relative_error <= 0.05);
}

#[test]
fn cusum_attack_alarms_at_most_once() {
    let cfg = DetectorConfig::Cusum {
        tau: 7.4,
        bias: 3.0,
    };
    let ens = run_ensemble(&attacked(cfg, 200)).unwrap();
    assert!(ens.summaries.iter().all(|s| s.alarms_after_attack <= 1));
    assert_eq!(ens.steady_phase_alarms(), 0);
}

#[test]
fn replica_zero_is_the_single_run() {
    let cfg = DetectorConfig::ChiSquared { alpha: 7.81 };
    let sc = attacked(cfg, 3);
    let a = run(&sc).unwrap();
    let b = run_replica(&sc, 0).unwrap();
    let c = run_replica(&sc, 1).unwrap();
    assert_eq!(a.norms(), b.norms());
    assert_ne!(a.norms(), c.norms());
    assert_eq!(run_ensemble(&sc).unwrap().first.norms(), a.norms());
}

#[test]
fn attack_flags_follow_k_star() {
    let cfg = DetectorConfig::ChiSquared { alpha: 7.81 };
    let trace = run(&attacked(cfg, 1)).unwrap();
    assert_eq!(trace.records.len(), 1000);
    for r in &trace.records {
        assert_eq!(r.attack_active, r.k >= 51, "k={}", r.k);
    }
}

#[test]
fn stable_loop_forgets_initial_state() {
    let s = |v: f64| Matrix::from_element(1, 1, v);
    let plant = PlantModel::new(s(0.5), s(1.0), s(1.0), s(1e-12), s(1e-12)).unwrap();
    let model = Arc::new(ClosedLoopModel::build(plant, s(-0.2), None).unwrap());
    let sc = Scenario::new(model, DetectorConfig::ChiSquared { alpha: 3.84 }, 200, 0, 0)
        .unwrap()
        .with_initial_state(Vector::from_element(1, 10.0), Vector::zeros(1))
        .unwrap();
    let trace = run(&sc).unwrap();
    assert!(trace.records.last().unwrap().norm_x < 1e-5);
}

proptest! {
    #[test]
    fn moving_average_matches_naive(xs in prop::collection::vec(-1e3f64..1e3, 1..300), w in 1usize..40) {
        let fast = moving_average(&xs, w).unwrap();
        for (i, v) in fast.iter().enumerate() {
            let lo = (i + 1).saturating_sub(w);
            let naive = xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            prop_assert!((v - naive).abs() <= 1e-9 * (1.0 + naive.abs()));
        }
    }
}

#[test]
fn zero_window_rejected() {
    assert!(moving_average(&[1.0], 0).is_err());
}
