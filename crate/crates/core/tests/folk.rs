mod common;

use nalgebra::{DMatrix, DVector};
use qrep::dynamics::QReplicatorConfig;
use qrep::folk::{
    basin_experiment, build_trigger_profile, feasible_ir_set, mixed_minmax, pure_minmax, BasinConfig, BasinDynamics,
    IrVariant,
};
use qrep::game::{RepeatedGameSpec, StageGame};
use qrep::rng::rng_from_seed;
use qrep::scenario::{matching_pennies_stage, named_profile, pd_stage};
use qrep::valuation::build_meta_game;
use rand::Rng;

/// Exact two-player mixed minmax by vertex enumeration: the minimum of a
/// maximum of linear functions over the opponent's simplex sits where k-1 of
/// the equalities {u_a = u_b, y_j = 0} hold together with Σ y = 1.
fn minmax_vertex_oracle(u: &[Vec<f64>]) -> f64 {
    // u[a][b]: minimized player's payoff, own action a, opponent action b.
    let k = u[0].len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for a in 0..u.len() {
        for b in a + 1..u.len() {
            rows.push((0..k).map(|j| u[a][j] - u[b][j]).collect());
        }
    }
    for j in 0..k {
        rows.push((0..k).map(|t| if t == j { 1.0 } else { 0.0 }).collect());
    }
    let value = |y: &[f64]| u.iter().map(|r| r.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()).fold(f64::MIN, f64::max);
    let mut best = f64::INFINITY;
    let m = rows.len();
    let mut pick = vec![0usize; k - 1];
    fn rec(start: usize, depth: usize, m: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for s in start..m {
            pick[depth] = s;
            rec(s + 1, depth + 1, m, pick, f);
        }
    }
    rec(0, 0, m, &mut pick, &mut |chosen: &[usize]| {
        let mut a = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (r, &c) in chosen.iter().enumerate() {
            for j in 0..k {
                a[(r, j)] = rows[c][j];
            }
        }
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        rhs[k - 1] = 1.0;
        if let Some(y) = a.lu().solve(&rhs) {
            if y.iter().all(|v| *v >= -1e-12 && v.is_finite()) {
                best = best.min(value(y.as_slice()));
            }
        }
    });
    best
}

fn random_game(rng: &mut qrep::rng::SimRng, counts: [usize; 2]) -> StageGame {
    let rewards = (0..counts[0] * counts[1])
        .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    StageGame::from_counts(&counts, rewards).unwrap()
}

fn payoff_rows(game: &StageGame, player: usize) -> Vec<Vec<f64>> {
    let counts = game.action_counts();
    let opp = 1 - player;
    (0..counts[player])
        .map(|a| {
            (0..counts[opp])
                .map(|b| {
                    let acts = if player == 0 { [a, b] } else { [b, a] };
                    game.reward(game.profile_index(&acts), player)
                })
                .collect()
        })
        .collect()
}

#[test]
fn mixed_minmax_matches_oracles() {
    let mut rng = rng_from_seed(41);
    for _ in 0..40 {
        let counts = [rng.random_range(2..=3), rng.random_range(2..=3)];
        let game = random_game(&mut rng, counts);
        for i in 0..2 {
            let rows = payoff_rows(&game, i);
            let m = mixed_minmax(&game, i).unwrap();
            assert!(!m.approximate);
            assert!((m.value - minmax_vertex_oracle(&rows)).abs() < 1e-7, "{rows:?}");
            if rows[0].len() == 2 && rows.len() == 2 {
                let r = [[rows[0][0], rows[0][1]], [rows[1][0], rows[1][1]]];
                assert!((m.value - common::minmax_2x2(&r)).abs() < 1e-7);
            }
            // The punisher's mixture actually holds the player to the value.
            let y = &m.punisher[1 - i];
            let best = rows.iter().map(|r| r.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()).fold(f64::MIN, f64::max);
            assert!((best - m.value).abs() < 1e-7);
            // Pure minmax by enumeration bounds the mixed one from above.
            let pure = (0..rows[0].len())
                .map(|b| rows.iter().map(|r| r[b]).fold(f64::MIN, f64::max))
                .fold(f64::MAX, f64::min);
            assert!((pure_minmax(&game, i).value - pure).abs() < 1e-12);
            assert!(m.value <= pure + 1e-9);
        }
    }
}

#[test]
fn matching_pennies_geometry() {
    let geo = feasible_ir_set(&matching_pennies_stage()).unwrap();
    assert_eq!(geo.minmax_mixed, vec![0.0, 0.0]);
    assert_eq!(geo.minmax_pure, vec![1.0, 1.0]);
    assert_eq!(geo.hull_vertices.len(), 2);
    // The hull is the segment u_1 + u_2 = 0; only the origin is individually rational.
    assert!(geo.contains(&[0.0, 0.0], IrVariant::Mixed).unwrap());
    assert!(!geo.contains(&[0.0, 0.0], IrVariant::Strict).unwrap());
    assert!(!geo.contains(&[0.0, 0.0], IrVariant::Pure).unwrap());
    assert!(!geo.in_hull(&[0.5, 0.0]).unwrap());
    assert!(geo.in_hull(&[0.5, -0.5]).unwrap());
}

#[test]
fn hull_membership_properties() {
    let mut rng = rng_from_seed(42);
    for _ in 0..20 {
        let game = random_game(&mut rng, [3, 3]);
        let geo = feasible_ir_set(&game).unwrap();
        for p in &geo.points {
            assert!(geo.in_hull(p).unwrap());
        }
        for (k, v) in geo.hull_vertices.iter().enumerate() {
            let w = &geo.hull_vertices[(k + 1) % geo.hull_vertices.len()];
            let mid: Vec<f64> = v.iter().zip(w).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!(geo.in_hull(&mid).unwrap());
        }
        let far: Vec<f64> = vec![10.0, 10.0];
        assert!(!geo.in_hull(&far).unwrap());
    }
    assert!(feasible_ir_set(&pd_stage()).unwrap().in_hull(&[1.0]).is_err());
}

#[test]
fn trigger_threshold_is_one_half() {
    for (delta, strict) in [(0.45, false), (0.55, true), (0.75, true)] {
        let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), delta, 1).unwrap()).unwrap();
        let t = build_trigger_profile(&meta, &[vec![0, 0]], 1).unwrap();
        assert_eq!(t.report.is_strict, strict, "δ = {delta}");
        assert_eq!(t.punishment, vec![1, 1]);
    }
}

#[test]
fn trigger_inputs_are_validated() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    assert!(build_trigger_profile(&meta, &[], 1).is_err());
    assert!(build_trigger_profile(&meta, &[vec![0, 2]], 1).is_err());
    assert!(build_trigger_profile(&meta, &[vec![0]], 1).is_err());
}

#[test]
fn basin_rejects_empty_experiments() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    let cfg = BasinConfig {
        dynamics: BasinDynamics::Exact(QReplicatorConfig::default()),
        threshold: 0.05,
    };
    assert!(basin_experiment(&meta, &grim, 0.02, 0, &cfg, 1).is_err());
    assert!(basin_experiment(&meta, &grim, 0.0, 5, &cfg, 1).is_err());
}

#[test]
fn small_exact_basin_is_reproducible() {
    let meta = build_meta_game(&RepeatedGameSpec::perfect(pd_stage(), 0.9, 1).unwrap()).unwrap();
    let grim = named_profile(meta.spec(), meta.strategy_space(), "grim").unwrap();
    let cfg = BasinConfig {
        dynamics: BasinDynamics::Exact(QReplicatorConfig {
            q: 1.0,
            gammas: vec![0.01],
            m: 10.0,
            max_steps: 500,
            record_stride: 500,
            ..Default::default()
        }),
        threshold: 0.05,
    };
    let a = basin_experiment(&meta, &grim, 0.02, 6, &cfg, 5).unwrap();
    let b = basin_experiment(&meta, &grim, 0.02, 6, &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.target_strict);
    assert_eq!(a.tried, 6);
    assert_eq!(a.runs.len(), 6);
}
