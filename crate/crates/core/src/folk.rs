//! Minmax values, feasible and individually rational payoff sets, trigger
//! profiles, and basin-of-attraction experiments.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{run_exact, QReplicatorConfig};
use crate::equilibrium::{check_strict, sample_ball, EquilibriumReport};
use crate::error::{Error, Result};
use crate::estimator::{run_stochastic, EpsilonGreedyConfig};
use crate::game::{RepeatedGameSpec, StageGame};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::strategy::{distance_to_class, private_histories, EnumerationOptions, PrivateHistories, StrategyProfile};
use crate::valuation::MetaGame;

/// Tolerance for hull membership (L1 residual of the best convex combination).
pub const HULL_TOL: f64 = 1e-9;
const RANDOM_STARTS: usize = 20;

fn lp_error(e: minilp::Error) -> Error {
    Error::internal(format!("linear program: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinmaxValue {
    pub value: f64,
    /// True when the value is only an upper bound (three or more players).
    pub approximate: bool,
    /// Minimizing mixed strategy of every opponent (empty entry for the player itself).
    pub punisher: Vec<Vec<f64>>,
}

/// Expected payoff of `player`'s action `a` against independent opponent mixtures.
fn payoff_vs(game: &StageGame, player: usize, a: usize, opp: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for p in 0..game.profile_count() {
        if game.action_of(p, player) != a {
            continue;
        }
        let mut w = 1.0;
        for (j, d) in opp.iter().enumerate() {
            if j != player {
                w *= d[game.action_of(p, j)];
                if w == 0.0 {
                    break;
                }
            }
        }
        if w != 0.0 {
            total += w * game.reward(p, player);
        }
    }
    total
}

fn best_reply_value(game: &StageGame, player: usize, opp: &[Vec<f64>]) -> f64 {
    (0..game.action_counts()[player])
        .map(|a| payoff_vs(game, player, a, opp))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimizes `max_a Σ_b σ(b) cost[a][b]` over one distribution σ.
fn minmax_lp(cost: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let cols = cost[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let sigma: Vec<Variable> = (0..cols).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(sigma.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for row in cost {
        let mut expr: Vec<(Variable, f64)> = sigma.iter().zip(row).map(|(&v, &c)| (v, c)).collect();
        expr.push((t, -1.0));
        lp.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    let sol = lp.solve().map_err(lp_error)?;
    let dist: Vec<f64> = sigma.iter().map(|&v| sol[v].max(0.0)).collect();
    let total: f64 = dist.iter().sum();
    Ok((sol.objective(), dist.iter().map(|x| x / total).collect()))
}

/// Cost matrix for `player` against opponent `j`, others fixed at `opp`.
fn cost_against(game: &StageGame, player: usize, j: usize, opp: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nj = game.action_counts()[j];
    (0..game.action_counts()[player])
        .map(|a| {
            (0..nj)
                .map(|b| {
                    let mut fixed = opp.to_vec();
                    fixed[j] = (0..nj).map(|k| if k == b { 1.0 } else { 0.0 }).collect();
                    payoff_vs(game, player, a, &fixed)
                })
                .collect()
        })
        .collect()
}

/// Mixed minmax value: exact LP for two players, multi-start alternating LP
/// descent (an upper bound) for more.
pub fn mixed_minmax(game: &StageGame, player: usize) -> Result<MinmaxValue> {
    let n = game.player_count();
    if player >= n {
        return Err(Error::invalid(format!("no player {player}")));
    }
    let counts = game.action_counts();
    if n == 1 {
        return Ok(MinmaxValue {
            value: best_reply_value(game, player, &[vec![]]),
            approximate: false,
            punisher: vec![vec![]],
        });
    }
    let uniform: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == player { vec![] } else { vec![1.0 / c as f64; c] })
        .collect();
    if n == 2 {
        let j = 1 - player;
        let (value, sigma) = minmax_lp(&cost_against(game, player, j, &uniform))?;
        let mut punisher = uniform;
        punisher[j] = sigma;
        return Ok(MinmaxValue {
            value,
            approximate: false,
            punisher,
        });
    }
    let mut starts: Vec<Vec<Vec<f64>>> = Vec::new();
    let pure = pure_minmax(game, player);
    let mut pure_start = uniform.clone();
    for (j, d) in pure_start.iter_mut().enumerate() {
        if j != player {
            *d = (0..counts[j]).map(|b| if b == pure.punisher[j] { 1.0 } else { 0.0 }).collect();
        }
    }
    starts.push(pure_start);
    let mut rng = rng_from_seed(derive_seed(player as u64, stream::FOLK, 0));
    for _ in 0..RANDOM_STARTS {
        starts.push(
            counts
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    if j == player {
                        return vec![];
                    }
                    let raw: Vec<f64> = (0..c).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / s).collect()
                })
                .collect(),
        );
    }
    let mut best = MinmaxValue {
        value: f64::INFINITY,
        approximate: true,
        punisher: uniform,
    };
    for mut opp in starts {
        let mut value = best_reply_value(game, player, &opp);
        for _ in 0..200 {
            let before = value;
            for j in (0..n).filter(|&j| j != player) {
                let (v, sigma) = minmax_lp(&cost_against(game, player, j, &opp))?;
                if v < value - 1e-15 {
                    opp[j] = sigma;
                    value = v;
                }
            }
            if before - value < 1e-12 {
                break;
            }
        }
        if value < best.value {
            best.value = value;
            best.punisher = opp;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureMinmax {
    pub value: f64,
    /// Minimizing opponent pure profile (own entry unused).
    pub punisher: Vec<usize>,
}

/// Pure minmax value by enumeration of opponent pure profiles.
pub fn pure_minmax(game: &StageGame, player: usize) -> PureMinmax {
    let n = game.player_count();
    let mut best = PureMinmax {
        value: f64::INFINITY,
        punisher: vec![0; n],
    };
    for p in 0..game.profile_count() {
        if game.action_of(p, player) != 0 {
            continue;
        }
        let opp = game.decode_profile(p);
        let v = (0..game.action_counts()[player])
            .map(|a| {
                let mut prof = opp.clone();
                prof[player] = a;
                game.reward(game.profile_index(&prof), player)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if v < best.value {
            best = PureMinmax { value: v, punisher: opp };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IrVariant {
    /// `u_i ≥` mixed minmax.
    Mixed,
    /// `u_i >` mixed minmax.
    Strict,
    /// `u_i ≥` pure minmax.
    Pure,
}

impl std::str::FromStr for IrVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(IrVariant::Mixed),
            "strict" => Ok(IrVariant::Strict),
            "pure" => Ok(IrVariant::Pure),
            other => Err(Error::invalid(format!("unknown set variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffGeometry {
    /// Distinct stage payoff vectors.
    pub points: Vec<Vec<f64>>,
    pub hull_vertices: Vec<Vec<f64>>,
    pub minmax_mixed: Vec<f64>,
    pub minmax_mixed_approximate: bool,
    pub minmax_pure: Vec<f64>,
}

/// Smallest L1 residual `‖Σ λ_k p_k − x‖₁` over convex weights `λ`.
fn hull_residual(points: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lambda: Vec<Variable> = points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(lambda.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for (d, &target) in x.iter().enumerate() {
        let plus = lp.add_var(1.0, (0.0, f64::INFINITY));
        let minus = lp.add_var(1.0, (0.0, f64::INFINITY));
        let mut expr: Vec<(Variable, f64)> = lambda.iter().zip(points).map(|(&v, p)| (v, p[d])).collect();
        expr.push((plus, 1.0));
        expr.push((minus, -1.0));
        lp.add_constraint(expr, ComparisonOp::Eq, target);
    }
    Ok(lp.solve().map_err(lp_error)?.objective().max(0.0))
}

/// Convex hull vertices of the stage payoffs and both minmax vectors.
pub fn feasible_ir_set(game: &StageGame) -> Result<PayoffGeometry> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for p in 0..game.profile_count() {
        let u = game.rewards_of(p).to_vec();
        if !points.iter().any(|q| q.iter().zip(&u).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            points.push(u);
        }
    }
    let mut hull_vertices = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let others: Vec<Vec<f64>> = points.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, q)| q.clone()).collect();
        if hull_residual(&others, p)? > HULL_TOL {
            hull_vertices.push(p.clone());
        }
    }
    let mut minmax_mixed = Vec::new();
    let mut approximate = false;
    for i in 0..game.player_count() {
        let m = mixed_minmax(game, i)?;
        approximate |= m.approximate;
        minmax_mixed.push(m.value);
    }
    Ok(PayoffGeometry {
        points,
        hull_vertices,
        minmax_mixed,
        minmax_mixed_approximate: approximate,
        minmax_pure: (0..game.player_count()).map(|i| pure_minmax(game, i).value).collect(),
    })
}

impl PayoffGeometry {
    pub fn in_hull(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.minmax_pure.len() {
            return Err(Error::invalid("payoff vector has the wrong dimension"));
        }
        Ok(hull_residual(&self.hull_vertices, x)? <= HULL_TOL)
    }

    /// Membership in W̃ (mixed), W̃⁰ (strict) or W̱ (pure).
    pub fn contains(&self, x: &[f64], variant: IrVariant) -> Result<bool> {
        if !self.in_hull(x)? {
            return Ok(false);
        }
        Ok(x.iter().enumerate().all(|(i, &u)| match variant {
            IrVariant::Mixed => u >= self.minmax_mixed[i] - HULL_TOL,
            IrVariant::Strict => u > self.minmax_mixed[i] + HULL_TOL,
            IrVariant::Pure => u >= self.minmax_pure[i] - HULL_TOL,
        }))
    }
}

/// A cycle-and-punishment pure profile with its certification.
#[derive(Debug, Clone)]
pub struct TriggerProfile {
    pub indices: Vec<usize>,
    pub profile: StrategyProfile,
    /// Per-player punishment action.
    pub punishment: Vec<usize>,
    pub report: EquilibriumReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Cycle(usize),
    Punish(usize),
}

struct Automaton<'a> {
    cycle: &'a [usize],
    punish_len: usize,
}

impl Automaton<'_> {
    fn step(&self, s: Phase, observed: usize) -> Phase {
        match s {
            Phase::Cycle(k) if observed == self.cycle[k] => Phase::Cycle((k + 1) % self.cycle.len()),
            Phase::Cycle(_) if self.punish_len > 0 => Phase::Punish(1),
            Phase::Cycle(_) => Phase::Cycle(0),
            Phase::Punish(j) if j < self.punish_len => Phase::Punish(j + 1),
            Phase::Punish(_) => Phase::Cycle(0),
        }
    }

    fn states(&self) -> Vec<Phase> {
        (0..self.cycle.len())
            .map(Phase::Cycle)
            .chain((1..=self.punish_len).map(Phase::Punish))
            .collect()
    }

    fn run(&self, from: Phase, window: &[usize]) -> Phase {
        window.iter().fold(from, |s, &o| self.step(s, o))
    }

    /// Phase inferred from a window of observed profiles, oldest first.
    fn decode(&self, window: &[usize], full: bool) -> Phase {
        if !full {
            return self.run(Phase::Cycle(0), window);
        }
        // Windows that follow the cycle from some offset are read as on-path.
        for k in 0..self.cycle.len() {
            let on_path = window.iter().enumerate().all(|(t, &o)| o == self.cycle[(k + t) % self.cycle.len()]);
            if on_path {
                return self.run(Phase::Cycle(k), window);
            }
        }
        let ends: Vec<Phase> = self.states().into_iter().map(|s| self.run(s, window)).collect();
        // Ambiguous windows resolve toward punishment.
        ends.iter()
            .copied()
            .filter(|s| matches!(s, Phase::Punish(_)))
            .min_by_key(|s| match s {
                Phase::Punish(j) => *j,
                Phase::Cycle(_) => usize::MAX,
            })
            .unwrap_or(ends[0])
    }
}

/// Map from each player's signal to the observed action profile under perfect monitoring.
fn signal_to_profile(spec: &RepeatedGameSpec) -> Result<Vec<Vec<usize>>> {
    if !spec.monitoring.is_perfect() {
        return Err(Error::invalid("trigger profiles require perfect monitoring"));
    }
    let n = spec.player_count();
    let mut map: Vec<Vec<usize>> = (0..n).map(|i| vec![usize::MAX; spec.monitoring.signal_counts()[i]]).collect();
    for p in 0..spec.stage.profile_count() {
        for &(z, _) in spec.monitoring.support(p) {
            for (i, m) in map.iter_mut().enumerate() {
                m[spec.monitoring.signal_of(z, i)] = p;
            }
        }
    }
    Ok(map)
}

fn trigger_tables(
    spec: &RepeatedGameSpec,
    histories: &[PrivateHistories],
    auto: &Automaton<'_>,
    punishment: &[usize],
    observed: &[Vec<usize>],
) -> Vec<Vec<usize>> {
    (0..spec.player_count())
        .map(|i| {
            (0..histories[i].count())
                .map(|h| {
                    let window: Vec<usize> = histories[i].decode(h).iter().map(|&(_, z)| observed[i][z]).collect();
                    let full = window.len() == spec.recall[i] && spec.recall[i] > 0;
                    match auto.decode(&window, full) {
                        Phase::Cycle(k) => spec.stage.action_of(auto.cycle[k], i),
                        Phase::Punish(_) => punishment[i],
                    }
                })
                .collect()
        })
        .collect()
}

/// Plays the tables deterministically, optionally with one forced deviation,
/// and returns the sequence of realised profiles.
fn simulate_tables(
    spec: &RepeatedGameSpec,
    histories: &[PrivateHistories],
    tables: &[Vec<usize>],
    periods: usize,
    deviation: Option<(usize, usize, usize)>,
) -> Vec<usize> {
    let n = spec.player_count();
    let mut h = vec![0usize; n];
    let mut out = Vec::with_capacity(periods);
    for t in 0..periods {
        let mut actions: Vec<usize> = (0..n).map(|i| tables[i][h[i]]).collect();
        if let Some((t0, i, a)) = deviation {
            if t == t0 {
                actions[i] = a;
            }
        }
        let p = spec.stage.profile_index(&actions);
        let z = spec.monitoring.support(p)[0].0;
        for i in 0..n {
            h[i] = histories[i].push(h[i], actions[i], spec.monitoring.signal_of(z, i));
        }
        out.push(p);
    }
    out
}

fn trigger_works(spec: &RepeatedGameSpec, histories: &[PrivateHistories], tables: &[Vec<usize>], auto: &Automaton<'_>, punish_profile: usize) -> bool {
    let l = auto.cycle.len();
    let max_recall = spec.recall.iter().copied().max().unwrap_or(0);
    let horizon = max_recall + 3 * l + auto.punish_len + 2;
    let path = simulate_tables(spec, histories, tables, horizon, None);
    if path.iter().enumerate().any(|(t, &p)| p != auto.cycle[t % l]) {
        return false;
    }
    for t0 in 0..max_recall + 2 * l {
        for i in 0..spec.player_count() {
            let on = spec.stage.action_of(auto.cycle[t0 % l], i);
            for a in (0..spec.stage.action_counts()[i]).filter(|&a| a != on) {
                let dev = simulate_tables(spec, histories, tables, t0 + 1 + auto.punish_len, Some((t0, i, a)));
                if dev[t0 + 1..].iter().any(|&p| p != punish_profile) {
                    return false;
                }
            }
        }
    }
    true
}

/// Builds the pure profile that plays `cycle` (action profiles given as
/// per-player actions) and punishes any observed departure for
/// `punishment_length` periods with minmax actions, then certifies it.
pub fn build_trigger_profile(meta: &MetaGame, cycle: &[Vec<usize>], punishment_length: usize) -> Result<TriggerProfile> {
    let spec = meta.spec();
    let game = &spec.stage;
    let n = spec.player_count();
    if cycle.is_empty() {
        return Err(Error::invalid("trigger cycle must not be empty"));
    }
    let mut cycle_idx = Vec::with_capacity(cycle.len());
    for prof in cycle {
        if prof.len() != n || prof.iter().zip(game.action_counts()).any(|(&a, &c)| a >= c) {
            return Err(Error::invalid("cycle entries must be action profiles of the stage game"));
        }
        cycle_idx.push(game.profile_index(prof));
    }
    let observed = signal_to_profile(spec)?;
    let punishment: Vec<usize> = (0..n)
        .map(|j| {
            if n == 1 {
                return pure_minmax(game, 0).punisher[0];
            }
            pure_minmax(game, (j + 1) % n).punisher[j]
        })
        .collect();
    let punish_profile = game.profile_index(&punishment);
    let auto = Automaton {
        cycle: &cycle_idx,
        punish_len: punishment_length,
    };
    let space = meta.strategy_space();
    let histories: Vec<PrivateHistories> = (0..n).map(|i| space.histories(i).clone()).collect();
    let tables = trigger_tables(spec, &histories, &auto, &punishment, &observed);
    if !trigger_works(spec, &histories, &tables, &auto, punish_profile) {
        let current = spec.recall.iter().copied().max().unwrap_or(0);
        let opts = EnumerationOptions {
            prune: space.options().prune,
            cap: usize::MAX >> 4,
        };
        for l in current + 1..=current + 2 * (cycle.len() + punishment_length) + 2 {
            let mut bigger = spec.clone();
            bigger.recall = vec![l; n];
            let hs: Vec<PrivateHistories> = (0..n)
                .map(|i| private_histories(&bigger, i, &opts))
                .collect::<Result<_>>()?;
            let t = trigger_tables(&bigger, &hs, &auto, &punishment, &observed);
            if trigger_works(&bigger, &hs, &t, &auto, punish_profile) {
                return Err(Error::Capacity {
                    what: "recall needed to encode the trigger phases".into(),
                    required: format!("recall {l}"),
                    cap: current,
                });
            }
        }
        return Err(Error::Capacity {
            what: "recall needed to encode the trigger phases".into(),
            required: "no recall up to the search bound".into(),
            cap: current,
        });
    }
    let indices: Vec<usize> = tables
        .iter()
        .enumerate()
        .map(|(i, t)| space.index_of(i, t))
        .collect::<Result<_>>()?;
    let profile = StrategyProfile::pure(space, &indices)?;
    let report = check_strict(meta, &profile);
    Ok(TriggerProfile {
        indices,
        profile,
        punishment,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BasinDynamics {
    Exact(QReplicatorConfig),
    Stochastic(EpsilonGreedyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinConfig {
    pub dynamics: BasinDynamics,
    /// Class distance below which a run counts as converged.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinRun {
    pub seed: u64,
    pub converged: bool,
    pub final_distance: f64,
    pub episodes_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinResult {
    pub radius: f64,
    pub tried: usize,
    pub converged: usize,
    pub mean_final_distance: f64,
    pub target_strict: bool,
    pub runs: Vec<BasinRun>,
}

impl BasinResult {
    pub fn converged_fraction(&self) -> f64 {
        self.converged as f64 / self.tried as f64
    }
}

/// Starts `seeds` runs uniformly in the radius ball around `target` and
/// counts those that end within the threshold of its class.
pub fn basin_experiment(meta: &MetaGame, target: &StrategyProfile, radius: f64, seeds: usize, cfg: &BasinConfig, master_seed: u64) -> Result<BasinResult> {
    if seeds == 0 {
        return Err(Error::invalid("basin experiment needs at least one seed"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("basin radius must be positive"));
    }
    let target_strict = check_strict(meta, target).is_strict;
    let runs: Vec<BasinRun> = (0..seeds)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(master_seed, stream::DYNAMICS, k as u64);
            let mut start_rng = rng_from_seed(derive_seed(master_seed, stream::START, k as u64));
            let start = sample_ball(target, radius, &mut start_rng);
            let traj = match &cfg.dynamics {
                BasinDynamics::Exact(c) => run_exact(meta, &start, c, Some(target))?,
                BasinDynamics::Stochastic(c) => run_stochastic(meta, &start, c, seed, Some(target))?,
            };
            let final_distance = distance_to_class(meta, traj.final_profile(), target);
            Ok(BasinRun {
                seed,
                converged: final_distance < cfg.threshold,
                final_distance,
                episodes_used: traj.steps,
            })
        })
        .collect::<Result<_>>()?;
    let converged = runs.iter().filter(|r| r.converged).count();
    let mean_final_distance = runs.iter().map(|r| r.final_distance).sum::<f64>() / seeds as f64;
    Ok(BasinResult {
        radius,
        tried: seeds,
        converged,
        mean_final_distance,
        target_strict,
        runs,
    })
}
