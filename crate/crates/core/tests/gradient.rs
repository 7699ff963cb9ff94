use proptest::prelude::*;
use qrep::dynamics::{q_direction, q_gradient, q_weight, run_exact, QReplicatorConfig, StopReason};
use qrep::equilibrium::random_small_spec;
use qrep::rng::rng_from_seed;
use qrep::scenario::{named_profile, one_shot_pd, pd_stage};
use qrep::game::RepeatedGameSpec;
use qrep::strategy::{distance_to_class, StrategyProfile};
use qrep::valuation::build_meta_game;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Σ_α π_α^q (V_α - weighted mean) = 0 by construction of the weighted mean.
    #[test]
    fn weighted_components_cancel(
        u in prop::collection::vec(-5.0f64..5.0, 2..12),
        raw in prop::collection::vec(0.01f64..1.0, 12),
        q in 0.0f64..3.0,
    ) {
        let k = u.len();
        let s: f64 = raw[..k].iter().sum();
        let pi: Vec<f64> = raw[..k].iter().map(|x| x / s).collect();
        let v = q_direction(&u, &pi, q);
        prop_assert!(v.iter().sum::<f64>().abs() < 1e-10);
    }

    // q = 1 is the replicator field π_α (V_α - V̄).
    #[test]
    fn q_one_is_replicator(
        u in prop::collection::vec(-5.0f64..5.0, 2..12),
        raw in prop::collection::vec(0.01f64..1.0, 12),
    ) {
        let k = u.len();
        let s: f64 = raw[..k].iter().sum();
        let pi: Vec<f64> = raw[..k].iter().map(|x| x / s).collect();
        let mean: f64 = pi.iter().zip(&u).map(|(p, x)| p * x).sum();
        let v = q_direction(&u, &pi, 1.0);
        for a in 0..k {
            prop_assert!((v[a] - pi[a] * (u[a] - mean)).abs() < 1e-12);
        }
    }

    // Adding a constant to every payoff leaves the direction unchanged.
    #[test]
    fn invariant_to_payoff_shift(
        u in prop::collection::vec(-5.0f64..5.0, 2..8),
        raw in prop::collection::vec(0.01f64..1.0, 8),
        c in -10.0f64..10.0,
        q in 0.0f64..3.0,
    ) {
        let k = u.len();
        let s: f64 = raw[..k].iter().sum();
        let pi: Vec<f64> = raw[..k].iter().map(|x| x / s).collect();
        let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
        for (a, b) in q_direction(&u, &pi, q).iter().zip(&q_direction(&shifted, &pi, q)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_to_the_zero_is_one() {
    assert_eq!(q_weight(0.0, 0.0), 1.0);
    assert_eq!(q_weight(0.0, 1.0), 0.0);
    assert_eq!(q_weight(0.25, 0.5), 0.5);
}

#[test]
fn pure_profiles_are_rest_points_for_positive_q() {
    let mut rng = rng_from_seed(11);
    for _ in 0..5 {
        let spec = random_small_spec(&mut rng, 1);
        let meta = build_meta_game(&spec).unwrap();
        let counts = meta.strategy_counts().to_vec();
        let idx = [counts[0] / 3, counts[1] / 2];
        let p = StrategyProfile::pure(meta.strategy_space(), &idx).unwrap();
        for q in [0.5, 1.0, 2.0] {
            let v = q_gradient(&meta, &p, q).unwrap();
            assert!(v.iter().flatten().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn one_shot_pd_closed_form() {
    // v_C = π_C^q π_D^q (u_C - u_D) / (π_C^q + π_D^q) with u_C - u_D = -1 in this game.
    let meta = build_meta_game(&one_shot_pd()).unwrap();
    let p = StrategyProfile::new(meta.strategy_space(), vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    for q in [0.0, 0.5, 1.0, 2.0] {
        let v = q_gradient(&meta, &p, q).unwrap();
        for (i, w) in p.weights().iter().enumerate() {
            let (c, d) = (w[0].powf(q), w[1].powf(q));
            let want = -c * d / (c + d);
            assert!((v[i][0] - want).abs() < 1e-12, "q = {q}");
            assert!((v[i][1] + want).abs() < 1e-12);
        }
    }
}

#[test]
fn process_stays_on_the_simplex_and_records_its_ends() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.8, 1).unwrap()).unwrap();
    let mut rng = rng_from_seed(12);
    let start = StrategyProfile::random_interior(meta.strategy_space(), &mut rng);
    let cfg = QReplicatorConfig {
        q: 1.0,
        max_steps: 200,
        record_stride: 50,
        ..Default::default()
    };
    let traj = run_exact(&meta, &start, &cfg, None).unwrap();
    assert_eq!(traj.steps, 200);
    assert_eq!(traj.stop, StopReason::MaxSteps);
    assert_eq!(traj.profiles.first().unwrap().0, 0);
    assert_eq!(traj.profiles.last().unwrap().0, 200);
    for (_, p) in &traj.profiles {
        assert!(p.simplex_violation() < 1e-12);
    }
}

#[test]
fn stops_at_target_class() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    let mut rng = rng_from_seed(13);
    let start = qrep::equilibrium::sample_ball(&grim, 0.02, &mut rng);
    let cfg = QReplicatorConfig {
        q: 0.0,
        gammas: vec![0.01],
        m: 10.0,
        max_steps: 20_000,
        stop_tolerance: 1e-3,
        ..Default::default()
    };
    let traj = run_exact(&meta, &start, &cfg, Some(&grim)).unwrap();
    assert_eq!(traj.stop, StopReason::TargetReached);
    assert!(distance_to_class(&meta, traj.final_profile(), &grim) < 1e-3);
}

#[test]
fn rejects_bad_configs() {
    let meta = build_meta_game(&one_shot_pd()).unwrap();
    let start = StrategyProfile::uniform(meta.strategy_space());
    for cfg in [
        QReplicatorConfig { q: -1.0, ..Default::default() },
        QReplicatorConfig { gammas: vec![-0.1], ..Default::default() },
        QReplicatorConfig { gammas: vec![0.1, 0.1, 0.1], ..Default::default() },
        QReplicatorConfig { p: 0.0, ..Default::default() },
    ] {
        assert!(run_exact(&meta, &start, &cfg, None).is_err(), "{cfg:?}");
    }
}
