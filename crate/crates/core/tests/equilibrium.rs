use qrep::equilibrium::{
    check_equilibrium, check_strict, check_variational, cross_validate_lemma, random_small_spec, sample_ball,
    CrossValidationConfig,
};
use qrep::game::{RepeatedGameSpec, StageGame};
use qrep::rng::{rng_from_seed, SimRng};
use qrep::scenario::{matching_pennies_stage, named_profile, one_shot_pd, pd_stage};
use qrep::strategy::{same_class, StrategyProfile};
use qrep::valuation::{build_meta_game, MetaGame};

/// Brute-force oracle straight from the payoff table: best pure deviation
/// gain, and whether every non-losing deviation keeps the class.
fn oracle(meta: &MetaGame, idx: &[usize]) -> (f64, bool) {
    let base = meta.pure_value(idx);
    let space = meta.strategy_space();
    let star = StrategyProfile::pure(space, idx).unwrap();
    let mut best = f64::NEG_INFINITY;
    let mut strict = true;
    for i in 0..meta.player_count() {
        for s in 0..meta.strategy_counts()[i] {
            let mut dev = idx.to_vec();
            dev[i] = s;
            let gain = meta.pure_value(&dev)[i] - base[i];
            best = best.max(gain);
            if gain >= -1e-9 && !same_class(meta, &StrategyProfile::pure(space, &dev).unwrap(), &star) {
                strict = false;
            }
        }
    }
    (best, strict && best <= 1e-9)
}

#[test]
fn strictness_matches_brute_force() {
    let mut rng = rng_from_seed(31);
    for _ in 0..6 {
        let meta = build_meta_game(&random_small_spec(&mut rng, 1)).unwrap();
        for p in (0..meta.profile_count()).step_by(37) {
            let idx = meta.decode_profile(p);
            let profile = StrategyProfile::pure(meta.strategy_space(), &idx).unwrap();
            let (gain, strict) = oracle(&meta, &idx);
            let r = check_strict(&meta, &profile);
            assert!((r.worst_deviation.gain - gain).abs() < 1e-12);
            assert_eq!(r.is_equilibrium, gain <= 1e-9);
            assert_eq!(r.is_strict, strict);
        }
    }
}

#[test]
fn one_shot_examples() {
    let meta = build_meta_game(&one_shot_pd()).unwrap();
    let dd = StrategyProfile::pure(meta.strategy_space(), &[1, 1]).unwrap();
    let r = check_strict(&meta, &dd);
    assert!(r.is_strict);
    assert!((r.min_losing_margin.unwrap() - 1.0).abs() < 1e-12);
    let cc = StrategyProfile::pure(meta.strategy_space(), &[0, 0]).unwrap();
    let r = check_equilibrium(&meta, &cc);
    assert!(!r.is_equilibrium);
    assert!((r.worst_deviation.gain - 1.0).abs() < 1e-12);

    let spec = RepeatedGameSpec::perfect(matching_pennies_stage(), 0.0, 0).unwrap();
    let meta = build_meta_game(&spec).unwrap();
    for p in 0..4 {
        let profile = StrategyProfile::pure(meta.strategy_space(), &meta.decode_profile(p)).unwrap();
        assert!(!check_equilibrium(&meta, &profile).is_equilibrium);
    }
    let mixed = StrategyProfile::uniform(meta.strategy_space());
    let r = check_strict(&meta, &mixed);
    assert!(r.is_equilibrium && !r.is_strict);
}

#[test]
fn grim_is_strict_at_high_patience_only() {
    for (delta, strict) in [(0.9, true), (0.6, true), (0.4, false)] {
        let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), delta, 1).unwrap()).unwrap();
        let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
        // Deviating once gains 1 and loses δ/(1-δ) per later period: strict iff δ > 1/2.
        assert_eq!(check_strict(&meta, &grim).is_strict, strict, "δ = {delta}");
    }
}

#[test]
fn variational_conditions_at_grim() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    for q in [0.0, 1.0] {
        let r = check_variational(&meta, &grim, q, 0.02, 500, 7);
        assert!(r.c1_holds && r.c2_holds, "q = {q}: {r:?}");
        assert!(r.excluded_in_class > 0);
    }
    // At a pure profile the q > 0 field vanishes, so only q = 0 sees that
    // all-cooperate is not an equilibrium through the vertex condition.
    let allc = named_profile(meta.spec(), meta.strategy_space(), "allc").unwrap();
    assert!(!check_strict(&meta, &allc).is_equilibrium);
    assert!(!check_variational(&meta, &allc, 0.0, 0.02, 100, 7).c1_holds);
    assert!(check_variational(&meta, &allc, 1.0, 0.02, 100, 7).c1_holds);
}

#[test]
fn ball_samples_stay_feasible_and_close() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    let mut rng = rng_from_seed(32);
    for _ in 0..200 {
        let p = sample_ball(&grim, 0.05, &mut rng);
        assert!(p.simplex_violation() < 1e-12);
        assert!(p.distance(&grim) <= 0.05 + 1e-12);
    }
}

#[test]
fn cross_validation_small_batch() {
    let gen = |rng: &mut SimRng| random_small_spec(rng, 1);
    let cfg = CrossValidationConfig { samples: 300, ..Default::default() };
    let s = cross_validate_lemma(&gen, 12, &cfg, 33).unwrap();
    assert_eq!(s.trials, 12);
    assert!(s.strict_profiles > 0);
    assert!(s.confirmed.is_empty(), "{:?}", s.confirmed.first().map(|c| (&c.profile, c.q, &c.variational)));
}

#[test]
fn three_player_games_are_supported() {
    let stage = StageGame::from_counts(&[2, 2, 2], (0..8).map(|p| vec![p as f64, -(p as f64), 1.0]).collect()).unwrap();
    let spec = RepeatedGameSpec::perfect(stage, 0.0, 0).unwrap();
    let meta = build_meta_game(&spec).unwrap();
    // Player 0 strictly prefers action 1, player 1 action 0, player 2 is indifferent.
    let p = StrategyProfile::pure(meta.strategy_space(), &[1, 0, 0]).unwrap();
    let r = check_strict(&meta, &p);
    assert!(r.is_equilibrium && !r.is_strict);
}
