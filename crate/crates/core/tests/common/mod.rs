//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use qrep::game::{MonitoringStructure, RepeatedGameSpec, StageGame};
use qrep::rng::SimRng;
use qrep::strategy::StrategySpace;
use rand::Rng;

/// Active-set solver for `min ½ yᵀQy + cᵀy` s.t. `1ᵀy = 1`, `y ≥ 0`, with
/// `Q` positive definite. Starts from the uniform point.
pub fn simplex_qp(q: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let mut y = DVector::from_element(n, 1.0 / n as f64);
    let mut fixed = vec![false; n];
    for _ in 0..10 * n + 100 {
        let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
        let k = free.len();
        // KKT system on the free variables: [Q_FF 1; 1ᵀ 0][y_F; λ] = [-c_F; 1].
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (r, &a) in free.iter().enumerate() {
            for (s, &b) in free.iter().enumerate() {
                kkt[(r, s)] = q[(a, b)];
            }
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
            rhs[r] = -c[a];
        }
        rhs[k] = 1.0;
        let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
        let mut target = DVector::zeros(n);
        for (r, &a) in free.iter().enumerate() {
            target[a] = sol[r];
        }
        let lambda = sol[k];
        let step = &target - &y;
        let mut alpha = 1.0;
        let mut blocking = None;
        for &j in &free {
            if step[j] < -1e-15 {
                let a = -y[j] / step[j];
                if a < alpha {
                    alpha = a;
                    blocking = Some(j);
                }
            }
        }
        y += alpha * step;
        if let Some(j) = blocking {
            y[j] = 0.0;
            fixed[j] = true;
            continue;
        }
        // Bound multipliers μ_j = (Qy + c)_j + λ must be nonnegative.
        let g = q * &y + c;
        let worst = (0..n)
            .filter(|&j| fixed[j])
            .map(|j| (j, g[j] + lambda))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((j, mu)) if mu < -1e-13 => fixed[j] = false,
            _ => return y,
        }
    }
    panic!("active-set oracle did not terminate");
}

/// Euclidean projection onto the simplex through the generic QP oracle.
pub fn projection_oracle(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let q = DMatrix::identity(n, n);
    let c = -DVector::from_column_slice(x);
    simplex_qp(&q, &c).iter().copied().collect()
}

/// Two-player, two-action game with rewards in [-1, 1], two private signals
/// per player drawn from a random kernel, recall 0 or 1, δ in [0, 0.9).
pub fn random_noisy_spec(rng: &mut SimRng) -> RepeatedGameSpec {
    let rewards: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let stage = StageGame::from_counts(&[2, 2], rewards).unwrap();
    let kernel: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut row: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect();
    let names = vec![vec!["x".to_string(), "y".to_string()]; 2];
    let monitoring = MonitoringStructure::new(&stage, names, kernel).unwrap();
    let recall = rng.random_range(0..=1);
    let delta = rng.random_range(0.0..0.9);
    RepeatedGameSpec::new(stage, monitoring, delta, vec![recall; 2]).unwrap()
}

/// A pure strategy given as an explicit lookup from the window of
/// (own action, own signal) pairs, oldest first.
pub struct RuleTable(pub HashMap<Vec<(usize, usize)>, usize>);

/// Draws a random action per history and returns the library index of the
/// resulting strategy together with the table.
pub fn random_rule(space: &StrategySpace, player: usize, actions: usize, rng: &mut SimRng) -> (usize, RuleTable) {
    let mut table = HashMap::new();
    let index = space
        .index_from_rule(player, |h| {
            let a = rng.random_range(0..actions);
            table.insert(h.to_vec(), a);
            a
        })
        .unwrap();
    (index, RuleTable(table))
}

/// Plays the repeated game directly: continue with probability δ after each
/// period, sum undiscounted rewards. Returns per-player (mean, standard error).
pub fn monte_carlo_value(spec: &RepeatedGameSpec, rules: &[RuleTable], episodes: usize, rng: &mut SimRng) -> Vec<(f64, f64)> {
    let n = spec.player_count();
    let game = &spec.stage;
    let mon = &spec.monitoring;
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for _ in 0..episodes {
        let mut windows: Vec<VecDeque<(usize, usize)>> = vec![VecDeque::new(); n];
        let mut total = vec![0.0; n];
        loop {
            let acts: Vec<usize> = (0..n)
                .map(|i| {
                    let key: Vec<(usize, usize)> = windows[i].iter().copied().collect();
                    rules[i].0[&key]
                })
                .collect();
            let p = game.profile_index(&acts);
            for i in 0..n {
                total[i] += game.reward(p, i);
            }
            let u: f64 = rng.random();
            let row = mon.row(p);
            let mut acc = 0.0;
            let mut z = row.len() - 1;
            for (k, &w) in row.iter().enumerate() {
                acc += w;
                if u < acc {
                    z = k;
                    break;
                }
            }
            for i in 0..n {
                if spec.recall[i] == 0 {
                    continue;
                }
                windows[i].push_back((acts[i], mon.signal_of(z, i)));
                if windows[i].len() > spec.recall[i] {
                    windows[i].pop_front();
                }
            }
            if rng.random::<f64>() >= spec.delta {
                break;
            }
        }
        for i in 0..n {
            sum[i] += total[i];
            sq[i] += total[i] * total[i];
        }
    }
    let e = episodes as f64;
    (0..n)
        .map(|i| {
            let mean = sum[i] / e;
            let var = (sq[i] / e - mean * mean).max(0.0) * e / (e - 1.0);
            (mean, (var / e).sqrt())
        })
        .collect()
}

/// Mixed minmax of a two-action opponent by dense grid plus the closed-form
/// breakpoints where the maximizer's best response switches.
pub fn minmax_2x2(rewards: &[[f64; 2]; 2]) -> f64 {
    // rewards[a][b]: the minimized player's payoff for own action a, opponent action b.
    let val = |y: f64| (0..2).map(|a| (1.0 - y) * rewards[a][0] + y * rewards[a][1]).fold(f64::NEG_INFINITY, f64::max);
    let mut best = val(0.0).min(val(1.0));
    let d0 = rewards[0][1] - rewards[0][0];
    let d1 = rewards[1][1] - rewards[1][0];
    if (d0 - d1).abs() > 1e-15 {
        let y = (rewards[1][0] - rewards[0][0]) / (d0 - d1);
        if (0.0..=1.0).contains(&y) {
            best = best.min(val(y));
        }
    }
    for k in 0..=1000 {
        best = best.min(val(k as f64 / 1000.0));
    }
    best
}
