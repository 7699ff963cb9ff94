//! Exact repeated-game values of pure profiles, the meta-game over pure
//! strategies, and episode sampling.
//!
//! A pure profile induces a finite Markov chain over joint recall states (one
//! private history per player). Values are the expected sum of per-period
//! rewards with continuation probability δ, i.e. the solution of
//! `V = r + δ P V` at the all-empty state.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{strides, RepeatedGameSpec};
use crate::linalg::{self, Chain};
use crate::strategy::{
    for_each_product, EnumerationOptions, PathSource, PurePath, PureStrategy, StrategyProfile, StrategySpace,
};

/// Cap on the number of pure profiles in a meta-game.
pub const DEFAULT_PROFILE_CAP: usize = 1 << 20;

/// Values and path statistics of one pure profile.
#[derive(Debug, Clone)]
pub struct PureAnalysis {
    pub values: Vec<f64>,
    pub path: PurePath,
    pub states: usize,
}

/// Builds and solves the chain of a pure profile given as per-player action
/// lookups `act(player, history)`.
///
/// With `exploration > 0` each player's intended action is replaced by a
/// uniformly random one with that probability, independently every period.
pub fn analyze_pure(
    spec: &RepeatedGameSpec,
    space: &StrategySpace,
    act: &dyn Fn(usize, usize) -> usize,
    exploration: f64,
) -> Result<PureAnalysis> {
    let n = spec.player_count();
    let game = &spec.stage;
    let mon = &spec.monitoring;
    let hcounts: Vec<usize> = (0..n).map(|i| space.history_count(i)).collect();
    let hstrides = checked_strides(&hcounts)?;

    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut states: Vec<Vec<usize>> = vec![vec![0; n]];
    index.insert(0, 0);
    let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut chain = Chain::default();

    let mut cursor = 0;
    while cursor < states.len() {
        let state = states[cursor].clone();
        let dists: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let intended = act(i, state[i]);
                let na = game.action_counts()[i];
                if exploration > 0.0 {
                    (0..na)
                        .map(|a| {
                            let p = exploration / na as f64 + if a == intended { 1.0 - exploration } else { 0.0 };
                            (a, p)
                        })
                        .filter(|&(_, p)| p > 0.0)
                        .collect()
                } else {
                    vec![(intended, 1.0)]
                }
            })
            .collect();
        let mut r = vec![0.0; n];
        let mut outgoing: Vec<(Vec<usize>, f64)> = Vec::new();
        for_each_product(&dists, |actions, pa| {
            let profile = game.profile_index(actions);
            for (i, ri) in r.iter_mut().enumerate() {
                *ri += pa * game.reward(profile, i);
            }
            if spec.delta > 0.0 {
                for &(z, pz) in mon.support(profile) {
                    let next: Vec<usize> = (0..n)
                        .map(|i| space.histories(i).push(state[i], actions[i], mon.signal_of(z, i)))
                        .collect();
                    outgoing.push((next, pa * pz));
                }
            }
        });
        for (i, ri) in r.into_iter().enumerate() {
            rewards[i].push(ri);
        }
        for (next, p) in outgoing {
            let key: usize = next.iter().zip(&hstrides).map(|(h, s)| h * s).sum();
            let to = *index.entry(key).or_insert_with(|| {
                states.push(next);
                states.len() - 1
            });
            chain.transitions.push((cursor, to, p));
        }
        cursor += 1;
    }
    chain.states = states.len();
    let sol = linalg::solve(&chain, spec.delta, &rewards)?;

    let mut reach: Vec<Vec<bool>> = hcounts.iter().map(|&c| vec![false; c]).collect();
    let mut occupancy: Vec<Vec<f64>> = hcounts.iter().map(|&c| vec![0.0; c]).collect();
    for (s, state) in states.iter().enumerate() {
        for i in 0..n {
            reach[i][state[i]] = true;
            occupancy[i][state[i]] += sol.occupancy[s].max(0.0);
        }
    }
    Ok(PureAnalysis {
        values: sol.values.iter().map(|v| v[0]).collect(),
        path: PurePath { reach, occupancy },
        states: states.len(),
    })
}

fn checked_strides(counts: &[usize]) -> Result<Vec<usize>> {
    counts
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .ok_or_else(|| Error::Capacity {
            what: "joint recall states".into(),
            required: "more than usize::MAX".into(),
            cap: usize::MAX,
        })?;
    Ok(strides(counts))
}

fn analyze_indices(spec: &RepeatedGameSpec, space: &StrategySpace, profile: &[usize], exploration: f64) -> Result<PureAnalysis> {
    analyze_pure(spec, space, &|i, h| space.action(i, profile[i], h), exploration)
}

/// Exact expected total reward of a pure profile.
pub fn value_of_pure_profile(spec: &RepeatedGameSpec, space: &StrategySpace, profile: &[PureStrategy]) -> Result<Vec<f64>> {
    if profile.len() != spec.player_count() {
        return Err(Error::invalid("one pure strategy per player expected"));
    }
    for (i, e) in profile.iter().enumerate() {
        if e.player != i || e.table.len() != space.history_count(i) {
            return Err(Error::invalid(format!("pure strategy for player {i} does not match the strategy space")));
        }
        if e.table.iter().any(|&a| a >= space.action_count(i)) {
            return Err(Error::invalid(format!("pure strategy for player {i} plays an unknown action")));
        }
    }
    Ok(analyze_pure(spec, space, &|i, h| profile[i].table[h], 0.0)?.values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaGameOptions {
    pub enumeration: EnumerationOptions,
    /// Per-period exploration probability used when evaluating pure profiles.
    pub exploration: f64,
    pub profile_cap: usize,
}

impl Default for MetaGameOptions {
    fn default() -> Self {
        Self {
            enumeration: EnumerationOptions::default(),
            exploration: 0.0,
            profile_cap: DEFAULT_PROFILE_CAP,
        }
    }
}

/// Normal-form game whose actions are pure finite-recall strategies.
#[derive(Debug, Clone)]
pub struct MetaGame {
    spec: RepeatedGameSpec,
    space: StrategySpace,
    exploration: f64,
    strides: Vec<usize>,
    /// `payoffs[i][profile]`, profile index mixed radix with player 0 most significant.
    payoffs: Vec<Vec<f64>>,
    /// Paths of the unexplored game, cached when `exploration == 0`.
    paths: Option<Vec<PurePath>>,
}

/// Builds the meta-game with default options.
pub fn build_meta_game(spec: &RepeatedGameSpec) -> Result<MetaGame> {
    MetaGame::build(spec, MetaGameOptions::default())
}

impl MetaGame {
    pub fn build(spec: &RepeatedGameSpec, opts: MetaGameOptions) -> Result<Self> {
        if !(0.0..=1.0).contains(&opts.exploration) {
            return Err(Error::invalid("exploration must lie in [0, 1]"));
        }
        let space = StrategySpace::new(spec, opts.enumeration)?;
        Self::build_in(spec, space, opts.exploration, opts.profile_cap)
    }

    /// Builds over an already enumerated strategy space.
    pub fn build_in(spec: &RepeatedGameSpec, space: StrategySpace, exploration: f64, profile_cap: usize) -> Result<Self> {
        let counts = space.strategy_counts().to_vec();
        let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c).filter(|&t| t <= profile_cap));
        let total = total.ok_or_else(|| Error::Capacity {
            what: "pure profiles in the meta-game".into(),
            required: counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" x "),
            cap: profile_cap,
        })?;
        let strides = strides(&counts);
        let n = counts.len();
        let analyses: Vec<PureAnalysis> = (0..total)
            .into_par_iter()
            .map(|p| {
                let idx: Vec<usize> = (0..n).map(|i| (p / strides[i]) % counts[i]).collect();
                analyze_indices(spec, &space, &idx, exploration)
            })
            .collect::<Result<_>>()?;
        let payoffs = (0..n).map(|i| analyses.iter().map(|a| a.values[i]).collect()).collect();
        let paths = if exploration == 0.0 {
            Some(analyses.into_iter().map(|a| a.path).collect())
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            space,
            exploration,
            strides,
            payoffs,
            paths,
        })
    }

    pub fn spec(&self) -> &RepeatedGameSpec {
        &self.spec
    }

    pub fn strategy_space(&self) -> &StrategySpace {
        &self.space
    }

    pub fn exploration(&self) -> f64 {
        self.exploration
    }

    pub fn player_count(&self) -> usize {
        self.strides.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        self.space.strategy_counts()
    }

    pub fn profile_count(&self) -> usize {
        self.payoffs[0].len()
    }

    pub fn profile_index(&self, indices: &[usize]) -> usize {
        indices.iter().zip(&self.strides).map(|(s, k)| s * k).sum()
    }

    pub fn decode_profile(&self, profile: usize) -> Vec<usize> {
        let counts = self.strategy_counts();
        self.strides.iter().zip(counts).map(|(k, c)| (profile / k) % c).collect()
    }

    /// `V_i` of the pure profile with flat index `profile`.
    pub fn payoff(&self, player: usize, profile: usize) -> f64 {
        self.payoffs[player][profile]
    }

    pub fn pure_value(&self, indices: &[usize]) -> Vec<f64> {
        let p = self.profile_index(indices);
        self.payoffs.iter().map(|v| v[p]).collect()
    }

    pub fn max_abs_payoff(&self) -> f64 {
        self.payoffs.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `V_i(e_α, π_{-i})` for every pure strategy `α` of `player`.
    pub fn payoff_against(&self, player: usize, profile: &StrategyProfile) -> Vec<f64> {
        let n = self.player_count();
        let count = self.strategy_counts()[player];
        let stride = self.strides[player];
        let table = &self.payoffs[player];
        let supports: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| if j == player { vec![(0, 1.0)] } else { profile.support(j) })
            .collect();
        let mut out = vec![0.0; count];
        for_each_product(&supports, |idx, w| {
            let base: usize = idx.iter().zip(&self.strides).map(|(s, k)| s * k).sum();
            for (a, slot) in out.iter_mut().enumerate() {
                *slot += w * table[base + a * stride];
            }
        });
        out
    }

    /// Exact multilinear value `V_i(π)` for every player.
    pub fn mixed_value(&self, profile: &StrategyProfile) -> Vec<f64> {
        (0..self.player_count())
            .map(|i| {
                let row = self.payoff_against(i, profile);
                row.iter().zip(profile.player(i)).map(|(v, w)| v * w).sum()
            })
            .collect()
    }
}

impl PathSource for MetaGame {
    fn space(&self) -> &StrategySpace {
        &self.space
    }

    fn path(&self, profile: &[usize]) -> Cow<'_, PurePath> {
        match &self.paths {
            Some(paths) => Cow::Borrowed(&paths[self.profile_index(profile)]),
            None => Cow::Owned(
                analyze_indices(&self.spec, &self.space, profile, 0.0)
                    .expect("profile was solvable when the meta-game was built")
                    .path,
            ),
        }
    }
}

/// Exact values of a mixed profile (checked dimensions).
pub fn mixed_value(meta: &MetaGame, profile: &StrategyProfile) -> Result<Vec<f64>> {
    if profile.player_count() != meta.player_count()
        || profile.weights().iter().zip(meta.strategy_counts()).any(|(w, &c)| w.len() != c)
    {
        return Err(Error::invalid("profile dimensions do not match the meta-game"));
    }
    Ok(meta.mixed_value(profile))
}

/// One sampled play of the repeated game.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Pure strategy drawn by each player at the start.
    pub strategies: Vec<usize>,
    /// Per period: the flat action profile played.
    pub actions: Vec<usize>,
    /// Per period: the flat joint signal realised.
    pub signals: Vec<usize>,
    /// Per period: per-player reward.
    pub rewards: Vec<Vec<f64>>,
    /// Per period: each player's private history when choosing.
    pub histories: Vec<Vec<usize>>,
    /// Per period: whether each player's action was an exploration draw.
    pub explored: Vec<Vec<bool>>,
}

impl Episode {
    /// Termination period τ.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Realised total reward of every player.
    pub fn total_rewards(&self) -> Vec<f64> {
        let n = self.rewards.first().map_or(0, Vec::len);
        (0..n).map(|i| self.rewards.iter().map(|r| r[i]).sum()).collect()
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Samples one episode under mixed-strategy semantics: every player draws one
/// pure strategy up front; with `exploration > 0` each period's action is
/// replaced by a uniform draw with that probability.
pub fn sample_episode<R: Rng + ?Sized>(
    spec: &RepeatedGameSpec,
    space: &StrategySpace,
    profile: &StrategyProfile,
    exploration: f64,
    rng: &mut R,
) -> Episode {
    let n = spec.player_count();
    let game = &spec.stage;
    let mon = &spec.monitoring;
    let strategies: Vec<usize> = (0..n).map(|i| draw_index(profile.player(i), rng)).collect();
    let mut h = vec![0usize; n];
    let mut ep = Episode {
        strategies,
        actions: Vec::new(),
        signals: Vec::new(),
        rewards: Vec::new(),
        histories: Vec::new(),
        explored: Vec::new(),
    };
    let mut actions = vec![0usize; n];
    loop {
        let mut explored = vec![false; n];
        for i in 0..n {
            actions[i] = space.action(i, ep.strategies[i], h[i]);
            if exploration > 0.0 && rng.random::<f64>() < exploration {
                explored[i] = true;
                actions[i] = rng.random_range(0..game.action_counts()[i]);
            }
        }
        let profile_idx = game.profile_index(&actions);
        let row = mon.support(profile_idx);
        let z = if row.len() == 1 {
            row[0].0
        } else {
            let weights: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
            row[draw_index(&weights, rng)].0
        };
        ep.histories.push(h.clone());
        ep.actions.push(profile_idx);
        ep.signals.push(z);
        ep.rewards.push(game.rewards_of(profile_idx).to_vec());
        ep.explored.push(explored);
        if !(rng.random::<f64>() < spec.delta) {
            break;
        }
        for i in 0..n {
            h[i] = space.histories(i).push(h[i], actions[i], mon.signal_of(z, i));
        }
    }
    ep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::StageGame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pd(delta: f64, recall: usize) -> RepeatedGameSpec {
        let g = StageGame::new(
            vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
            vec![vec![2.0, 2.0], vec![0.0, 3.0], vec![3.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        RepeatedGameSpec::perfect(g, delta, recall).unwrap()
    }

    #[test]
    fn all_defect_value() {
        let spec = pd(0.9, 1);
        let space = StrategySpace::new(&spec, EnumerationOptions::default()).unwrap();
        let alld = space.strategy_counts()[0] - 1;
        let v = value_of_pure_profile(&spec, &space, &[space.pure_strategy(0, alld), space.pure_strategy(1, alld)]).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-9 && (v[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn zero_delta_is_stage_payoff() {
        let spec = pd(0.0, 1);
        let meta = build_meta_game(&spec).unwrap();
        for p in 0..meta.profile_count() {
            let idx = meta.decode_profile(p);
            let space = meta.strategy_space();
            let a0 = space.action(0, idx[0], 0);
            let a1 = space.action(1, idx[1], 0);
            let stage = spec.stage.profile_index(&[a0, a1]);
            assert_eq!(meta.payoff(0, p), spec.stage.reward(stage, 0));
        }
    }

    #[test]
    fn meta_game_shape() {
        let meta = build_meta_game(&pd(0.9, 1)).unwrap();
        assert_eq!(meta.strategy_counts(), &[32, 32]);
        assert_eq!(meta.profile_count(), 1024);
        let bound = 3.0 / (1.0 - 0.9) + 1e-9;
        assert!(meta.max_abs_payoff() <= bound);
    }

    #[test]
    fn mixed_value_of_mixture_is_row_mean() {
        let spec = pd(0.9, 0);
        let meta = build_meta_game(&spec).unwrap();
        let p = StrategyProfile::new(meta.strategy_space(), vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let v = meta.mixed_value(&p);
        let a = meta.pure_value(&[0, 1]);
        let b = meta.pure_value(&[1, 1]);
        assert!((v[0] - 0.5 * (a[0] + b[0])).abs() < 1e-12);
    }

    #[test]
    fn episodes_terminate_immediately_without_continuation() {
        let spec = pd(0.0, 1);
        let space = StrategySpace::new(&spec, EnumerationOptions::default()).unwrap();
        let p = StrategyProfile::uniform(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_episode(&spec, &space, &p, 0.0, &mut rng).len(), 1);
        }
    }

    #[test]
    fn all_defect_episode_rewards() {
        let spec = pd(0.9, 1);
        let space = StrategySpace::new(&spec, EnumerationOptions::default()).unwrap();
        let alld = space.strategy_counts()[0] - 1;
        let p = StrategyProfile::pure(&space, &[alld, alld]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = sample_episode(&spec, &space, &p, 0.0, &mut rng);
        assert!(ep.rewards.iter().all(|r| r == &vec![1.0, 1.0]));
    }
}
