use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use zero_alarm::attacks::{
    compute_m, gamma_bound, ones_direction, windowed_per_step_budget, worst_direction, AttackPlan,
    CusumStart, WindowedSaturation,
};
use zero_alarm::detectors::{tune_chi2, tune_windowed, CusumDetector, Detector, DetectorConfig};
use zero_alarm::model::{ClosedLoopModel, PlantModel};
use zero_alarm::numerics::{Matrix, Vector};
use zero_alarm::reactor::reactor_model;
use zero_alarm::sim::{run, Scenario};

// Reference evaluation of (I-F-GK)⁻¹GK(I-F)⁻¹LΣ^{1/2} for the bundled reactor.
const REACTOR_M: [[f64; 3]; 4] = [
    [
        0.003_654_090_268_513_237_3,
        12.620_421_828_134_93,
        214.361_667_818_545_38,
    ],
    [
        -0.004_617_338_734_191_852,
        -5_429.186_993_394_876,
        -92_223.630_994_065_55,
    ],
    [
        0.001_450_964_553_407_636_2,
        -14_578.671_031_058_204,
        -247_615.941_701_761_85,
    ],
    [
        -0.001_270_386_272_921_485,
        -10_499.989_178_474_661,
        -178_344.766_441_389_83,
    ],
];
const GAMMA_CHI2: f64 = 892_709.618_481_245_9;
const GAMMA_WINDOW_4: f64 = 732_153.830_610_341_3;
const GAMMA_WINDOW_50: f64 = 605_198.763_144_528_1;
const GAMMA_CUSUM: f64 = 553_113.057_209_897_2;

fn reactor() -> Arc<ClosedLoopModel> {
    Arc::new(reactor_model().unwrap().0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn reactor_m_matches_reference() {
    let m = compute_m(&reactor()).unwrap();
    assert_eq!(m.shape(), (4, 3));
    for (i, row) in REACTOR_M.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!(
                (m[(i, j)] - v).abs() <= 1e-9 * 247_615.9,
                "M[{i},{j}] = {} vs {v}",
                m[(i, j)]
            );
        }
    }
}

#[test]
fn reactor_gammas_and_ordering() {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let g = |cfg: DetectorConfig| gamma_bound(&model, &cfg, &nu1).unwrap().gamma;
    let chi = g(DetectorConfig::ChiSquared {
        alpha: tune_chi2(3, 0.05).unwrap(),
    });
    let w4 = g(DetectorConfig::Windowed {
        beta: tune_windowed(3, 4, 0.05).unwrap(),
        window: 4,
    });
    let w50 = g(DetectorConfig::Windowed {
        beta: tune_windowed(3, 50, 0.05).unwrap(),
        window: 50,
    });
    let cs = g(DetectorConfig::Cusum {
        tau: 1.0,
        bias: 3.0,
    });
    assert!(rel(chi, GAMMA_CHI2) < 1e-9);
    assert!(rel(w4, GAMMA_WINDOW_4) < 1e-9);
    assert!(rel(w50, GAMMA_WINDOW_50) < 1e-9);
    assert!(rel(cs, GAMMA_CUSUM) < 1e-9);
    assert!(chi > w4 && w4 > w50 && w50 > cs);
}

#[test]
fn naive_attack_ratios() {
    let model = reactor();
    let m = compute_m(&model).unwrap();
    let nu1 = worst_direction(&m).nu1;
    let alpha = tune_chi2(3, 0.05).unwrap();
    let literal = (&m * &nu1).norm() * alpha.sqrt() / (&m * Vector::from_element(3, 1.0)).norm();
    assert!((literal - 2.644_621_750_944_906).abs() < 1e-9);
    let normalized = (&m * &nu1).norm() / (&m * ones_direction(3)).norm();
    assert!((normalized - 1.6386).abs() < 1e-4);
}

#[test]
fn worst_direction_beats_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let m = Matrix::from_fn(4, 3, |_, _| StandardNormal.sample(&mut rng));
        let w = worst_direction(&m);
        let best = (&m * &w.nu1).norm();
        assert!((best * best - w.lambda1).abs() <= 1e-10 * w.lambda1);
        for _ in 0..10_000 {
            let v = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let v = &v / v.norm();
            assert!((&m * &v).norm() <= best + 1e-12);
        }
    }
}

#[test]
fn diagonal_worst_direction() {
    let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
    let w = worst_direction(&m);
    assert!((w.lambda1 - 4.0).abs() < 1e-12);
    assert!((w.nu1[0] - 1.0).abs() < 1e-12 && w.nu1[1].abs() < 1e-12);
}

fn scalar(k: f64) -> ClosedLoopModel {
    let s = |v: f64| Matrix::from_element(1, 1, v);
    let plant = PlantModel::new(s(0.5), s(1.0), s(1.0), s(1.0), s(1.0)).unwrap();
    ClosedLoopModel::build(plant, s(k), None).unwrap()
}

#[test]
fn zero_feedback_zero_gamma() {
    let model = scalar(0.0);
    let d = Vector::from_element(1, 1.0);
    for cfg in [
        DetectorConfig::ChiSquared { alpha: 3.84 },
        DetectorConfig::Windowed {
            beta: 12.0,
            window: 5,
        },
        DetectorConfig::Cusum {
            tau: 2.0,
            bias: 1.0,
        },
    ] {
        assert_eq!(gamma_bound(&model, &cfg, &d).unwrap().gamma, 0.0);
    }
}

#[test]
fn gamma_grows_by_root_two_when_alpha_doubles() {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let a = gamma_bound(&model, &DetectorConfig::ChiSquared { alpha: 7.81 }, &nu1).unwrap();
    let b = gamma_bound(&model, &DetectorConfig::ChiSquared { alpha: 15.62 }, &nu1).unwrap();
    assert!(rel(b.gamma / a.gamma, 2f64.sqrt()) < 1e-12);
    let m = compute_m(&model).unwrap();
    assert!(rel((&m * (&nu1 * a.magnitude)).norm(), a.gamma) < 1e-12);
}

#[test]
fn direction_must_be_unit() {
    let model = reactor();
    let d = Vector::from_element(3, 1.0);
    assert!(gamma_bound(&model, &DetectorConfig::ChiSquared { alpha: 7.81 }, &d).is_err());
}

#[test]
fn windowed_budget_tends_to_sensor_count() {
    let expected = [
        (1, 3.841_458_820_694_124),
        (100, 1.243_421_134_040_040_7),
        (10_000, 1.023_374_889_767_793_7),
    ];
    for (ell, v) in expected {
        assert!(
            (windowed_per_step_budget(1, ell, 0.05).unwrap() - v).abs() < 1e-9,
            "ell={ell}"
        );
    }
}

#[test]
fn cusum_attack_hand_iteration() {
    let (tau, b) = (5.0, 3.0);
    let cfg = DetectorConfig::Cusum { tau, bias: b };
    let plan = AttackPlan::new(cfg, 1, Vector::from_element(2, 1.0)).unwrap();
    let mut det = Detector::Cusum(CusumDetector::new(tau, b).unwrap());
    let mut seen = Vec::new();
    for k in 1..=20 {
        let z = plan.whitened_residual(&det, k).norm_squared();
        assert!(det.update(z, k).is_none());
        seen.push(det.statistic());
    }
    assert!((seen[0] - (tau - b)).abs() < 1e-9);
    assert!(seen.iter().all(|s| (s - seen[0]).abs() < 1e-12));
}

fn attacked_trace(
    cfg: DetectorConfig,
    plan: AttackPlan,
    steps: u64,
    seed: u64,
) -> zero_alarm::sim::SimulationTrace {
    let sc = Scenario::new(reactor(), cfg, steps, 50, seed)
        .unwrap()
        .with_attack(plan)
        .unwrap();
    run(&sc).unwrap()
}

#[test]
fn greedy_windowed_attack_saturates_through_transient() {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let beta = tune_windowed(3, 50, 0.05).unwrap();
    let cfg = DetectorConfig::Windowed { beta, window: 50 };
    let plan = AttackPlan::new(cfg, 51, nu1)
        .unwrap()
        .with_saturation(WindowedSaturation::GreedySaturating)
        .unwrap();
    let trace = attacked_trace(cfg, plan, 2000, 4);
    let after: Vec<_> = trace.records.iter().filter(|r| r.k >= 51).collect();
    assert!(after.iter().all(|r| !r.alarm));
    // saturated as soon as the pre-attack sum leaves room for the attacker
    let tail = after.iter().filter(|r| r.k >= 100);
    assert!(tail.clone().all(|r| (r.stat - beta).abs() <= 1e-8));
}

#[test]
fn pulse_attack_is_silent_in_steady_phase() {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let beta = tune_windowed(3, 4, 0.05).unwrap();
    let cfg = DetectorConfig::Windowed { beta, window: 4 };
    let plan = AttackPlan::new(cfg, 51, nu1)
        .unwrap()
        .with_saturation(WindowedSaturation::Pulse)
        .unwrap();
    let trace = attacked_trace(cfg, plan, 1000, 4);
    assert_eq!(trace.summary.steady_phase_alarms, 0);
    assert!(trace
        .records
        .iter()
        .filter(|r| r.k >= 54)
        .all(|r| (r.stat - beta).abs() <= 1e-8));
}

#[test]
fn exact_saturating_cusum_start_pins_threshold() {
    let model = reactor();
    let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
    let (tau, bias) = (7.4, 3.0);
    let cfg = DetectorConfig::Cusum { tau, bias };
    let plan = AttackPlan::new(cfg, 51, nu1)
        .unwrap()
        .with_cusum_start(CusumStart::ExactSaturating);
    let mut checked = 0;
    for seed in 0..20 {
        let trace = attacked_trace(cfg, plan.clone(), 300, seed);
        // a pre-attack exceedance resets S at k* whatever the attacker sends
        if trace.records[49].stat > tau {
            continue;
        }
        checked += 1;
        assert!(trace
            .records
            .iter()
            .filter(|r| r.k >= 51)
            .all(|r| !r.alarm && (r.stat - tau).abs() < 1e-9));
    }
    assert!(checked >= 15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chi2_attack_pins_distance(seed in any::<u64>(), far in 0.01f64..0.5) {
        let model = reactor();
        let nu1 = worst_direction(&compute_m(&model).unwrap()).nu1;
        let alpha = tune_chi2(3, far).unwrap();
        let cfg = DetectorConfig::ChiSquared { alpha };
        let trace = attacked_trace(cfg, AttackPlan::new(cfg, 51, nu1).unwrap(), 600, seed);
        for r in trace.records.iter().filter(|r| r.k >= 51) {
            prop_assert!((r.z - alpha).abs() <= 1e-9);
            prop_assert!(!r.alarm);
        }
    }

    #[test]
    fn windowed_attack_saturates_window(seed in any::<u64>(), ell in 1usize..60) {
        let dir = ones_direction(3);
        let beta = tune_windowed(3, ell, 0.05).unwrap();
        let cfg = DetectorConfig::Windowed { beta, window: ell };
        let trace = attacked_trace(cfg, AttackPlan::new(cfg, 51, dir).unwrap(), 400, seed);
        for r in trace.records.iter().filter(|r| r.k >= 51 + ell as u64 - 1) {
            prop_assert!((r.stat - beta).abs() <= 1e-8);
            prop_assert!(!r.alarm);
        }
    }
}
