use proptest::prelude::*;
use qrep::equilibrium::random_small_spec;
use qrep::game::RepeatedGameSpec;
use qrep::rng::rng_from_seed;
use qrep::scenario::{named_profile, pd_stage};
use qrep::strategy::{distance_to_class, in_class_variant, reachable_histories, same_class, StrategyProfile};
use qrep::valuation::{build_meta_game, MetaGame};
use rand::Rng;

fn small_meta(seed: u64) -> MetaGame {
    let mut rng = rng_from_seed(seed);
    build_meta_game(&random_small_spec(&mut rng, 1)).unwrap()
}

fn pure(meta: &MetaGame, a: usize, b: usize) -> StrategyProfile {
    let c = meta.strategy_counts();
    StrategyProfile::pure(meta.strategy_space(), &[a % c[0], b % c[1]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_class_is_an_equivalence(seed in 0u64..1000, x in prop::array::uniform6(0usize..64)) {
        let meta = small_meta(seed);
        let a = pure(&meta, x[0], x[1]);
        let b = pure(&meta, x[2], x[3]);
        let c = pure(&meta, x[4], x[5]);
        prop_assert!(same_class(&meta, &a, &a));
        prop_assert_eq!(same_class(&meta, &a, &b), same_class(&meta, &b, &a));
        if same_class(&meta, &a, &b) && same_class(&meta, &b, &c) {
            prop_assert!(same_class(&meta, &a, &c));
        }
    }

    #[test]
    fn variants_stay_in_class(seed in 0u64..1000, x in prop::array::uniform2(0usize..64), s in any::<u64>()) {
        let meta = small_meta(seed);
        let a = pure(&meta, x[0], x[1]);
        let mut rng = rng_from_seed(s);
        let v = in_class_variant(&meta, &a, &mut rng);
        prop_assert!(same_class(&meta, &a, &v));
        prop_assert_eq!(distance_to_class(&meta, &v, &a), 0.0);
        prop_assert_eq!(meta.mixed_value(&v), meta.mixed_value(&a));
    }

    #[test]
    fn distance_is_zero_exactly_on_the_class(seed in 0u64..1000, x in prop::array::uniform4(0usize..64)) {
        let meta = small_meta(seed);
        let a = pure(&meta, x[0], x[1]);
        let b = pure(&meta, x[2], x[3]);
        prop_assert_eq!(distance_to_class(&meta, &b, &a) == 0.0, same_class(&meta, &a, &b));
    }

    #[test]
    fn mixed_variants_stay_in_class(seed in 0u64..200, s in any::<u64>()) {
        let meta = small_meta(seed);
        let mut rng = rng_from_seed(s);
        let weights: Vec<Vec<f64>> = meta
            .strategy_counts()
            .iter()
            .map(|&c| {
                let mut w = vec![0.0; c];
                let (i, j) = (rng.random_range(0..c), rng.random_range(0..c));
                w[i] += 0.4;
                w[j] += 0.6;
                w
            })
            .collect();
        let p = StrategyProfile::new(meta.strategy_space(), weights).unwrap();
        let v = in_class_variant(&meta, &p, &mut rng);
        prop_assert!(same_class(&meta, &p, &v));
        let (vp, vv) = (meta.mixed_value(&p), meta.mixed_value(&v));
        for i in 0..2 {
            prop_assert!((vp[i] - vv[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn always_defect_reaches_one_history_per_layer() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let alld = named_profile(meta.spec(), meta.strategy_space(), "alld").unwrap();
    let reach = reachable_histories(&meta, &alld);
    // The empty history and (D, D/D).
    assert_eq!(reach, vec![vec![0, 4], vec![0, 4]]);
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    assert!(!same_class(&meta, &alld, &grim));
    assert_eq!(distance_to_class(&meta, &grim, &alld), 1.0 + 2.0 * 2.0);
}

#[test]
fn grim_and_all_cooperate_share_a_class() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    let allc = named_profile(meta.spec(), meta.strategy_space(), "allc").unwrap();
    assert!(same_class(&meta, &grim, &allc));
    // Half-way mixtures keep the on-path play fixed as well.
    let mix: Vec<Vec<f64>> = grim
        .weights()
        .iter()
        .zip(allc.weights())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    let mix = StrategyProfile::new(meta.strategy_space(), mix).unwrap();
    assert!(same_class(&meta, &grim, &mix));
}
