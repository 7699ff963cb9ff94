//! Finite-recall private histories, pure strategies, mixed profiles and the
//! on-path equivalence relation between profiles.
//!
//! A player with recall `l` decides after every private history of length
//! `0..=l`; the empty history is the first move. Histories are indexed layer by
//! layer (all length-0, then all length-1, ...) and, within a layer, as a
//! mixed-radix number over (action, signal) symbols with the oldest entry most
//! significant. Pushing a symbol onto a full window drops the oldest entry.
//!
//! Pure strategies are action tables over that index, enumerated
//! lexicographically with the empty history as the most significant digit.

use std::borrow::Cow;

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{check_distribution, RepeatedGameSpec};

/// Default cap on pure strategies per player.
pub const DEFAULT_STRATEGY_CAP: usize = 4096;
/// Tolerance when comparing induced conditional action distributions.
pub const CLASS_TOL: f64 = 1e-9;

/// Layered index over sequences of `symbol_count` symbols of length `0..=recall`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySpace {
    recall: usize,
    symbol_count: usize,
    /// `offsets[k]` is the first index of the length-`k` layer; `offsets[recall + 1]` is the total.
    offsets: Vec<usize>,
    powers: Vec<usize>,
}

impl HistorySpace {
    pub fn new(recall: usize, symbol_count: usize, cap: usize) -> Result<Self> {
        let mut offsets = vec![0usize];
        let mut powers = vec![1usize];
        for k in 0..=recall {
            let layer = powers[k];
            let next = offsets[k].checked_add(layer).filter(|&t| t <= cap).ok_or_else(|| Error::Capacity {
                what: format!("histories of recall {recall} over {symbol_count} symbols"),
                required: format!("more than {cap}"),
                cap,
            })?;
            offsets.push(next);
            powers.push(layer.saturating_mul(symbol_count));
        }
        Ok(Self {
            recall,
            symbol_count,
            offsets,
            powers,
        })
    }

    pub fn count(&self) -> usize {
        self.offsets[self.recall + 1]
    }

    pub fn recall(&self) -> usize {
        self.recall
    }

    pub fn symbol_count(&self) -> usize {
        self.symbol_count
    }

    pub fn len_of(&self, h: usize) -> usize {
        (0..=self.recall).rev().find(|&k| h >= self.offsets[k]).unwrap_or(0)
    }

    /// History after observing `symbol`.
    pub fn push(&self, h: usize, symbol: usize) -> usize {
        if self.recall == 0 {
            return 0;
        }
        let k = self.len_of(h);
        let inner = h - self.offsets[k];
        if k < self.recall {
            self.offsets[k + 1] + inner * self.symbol_count + symbol
        } else {
            let kept = inner % self.powers[self.recall - 1];
            self.offsets[self.recall] + kept * self.symbol_count + symbol
        }
    }

    /// Symbols of `h`, oldest first.
    pub fn decode(&self, h: usize) -> Vec<usize> {
        let k = self.len_of(h);
        let mut inner = h - self.offsets[k];
        let mut out = vec![0; k];
        for slot in out.iter_mut().rev() {
            *slot = inner % self.symbol_count;
            inner /= self.symbol_count;
        }
        out
    }

    pub fn encode(&self, symbols: &[usize]) -> Option<usize> {
        if symbols.len() > self.recall || symbols.iter().any(|&s| s >= self.symbol_count) {
            return None;
        }
        let inner = symbols.iter().fold(0, |acc, &s| acc * self.symbol_count + s);
        Some(self.offsets[symbols.len()] + inner)
    }
}

/// Private ℓ-recall histories of one player over (own action, own signal) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateHistories {
    pub space: HistorySpace,
    /// Admissible (action, signal) pairs; a history symbol indexes this list.
    pairs: Vec<(usize, usize)>,
    /// Lookup from `action * signal_count + signal` to symbol.
    lookup: Vec<Option<usize>>,
    signal_count: usize,
}

impl PrivateHistories {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn symbol(&self, action: usize, signal: usize) -> Option<usize> {
        self.lookup[action * self.signal_count + signal]
    }

    pub fn count(&self) -> usize {
        self.space.count()
    }

    /// History after playing `action` and observing `signal`.
    pub fn push(&self, h: usize, action: usize, signal: usize) -> usize {
        let s = self
            .symbol(action, signal)
            .expect("observed (action, signal) pair has positive kernel probability");
        self.space.push(h, s)
    }

    pub fn decode(&self, h: usize) -> Vec<(usize, usize)> {
        self.space.decode(h).into_iter().map(|s| self.pairs[s]).collect()
    }

    pub fn encode(&self, entries: &[(usize, usize)]) -> Option<usize> {
        let symbols: Option<Vec<usize>> = entries.iter().map(|&(a, z)| self.symbol(a, z)).collect();
        self.space.encode(&symbols?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationOptions {
    /// Drop (action, signal) pairs that no action profile can produce.
    pub prune: bool,
    pub cap: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            prune: true,
            cap: DEFAULT_STRATEGY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PureStrategy {
    pub player: usize,
    pub index: usize,
    /// Action after each private history.
    pub table: Vec<usize>,
}

/// Enumerated histories and pure strategies of every player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpace {
    histories: Vec<PrivateHistories>,
    action_counts: Vec<usize>,
    strategy_counts: Vec<usize>,
    /// Per player, `tables[i][s * H_i + h]`.
    tables: Vec<Vec<u16>>,
    options: EnumerationOptions,
}

pub(crate) fn private_histories(spec: &RepeatedGameSpec, player: usize, opts: &EnumerationOptions) -> Result<PrivateHistories> {
    let game = &spec.stage;
    let mon = &spec.monitoring;
    let na = game.action_counts()[player];
    let nz = mon.signal_counts()[player];
    let mut possible = vec![!opts.prune; na * nz];
    if opts.prune {
        for p in 0..game.profile_count() {
            let a = game.action_of(p, player);
            for &(z, _) in mon.support(p) {
                possible[a * nz + mon.signal_of(z, player)] = true;
            }
        }
    }
    let mut pairs = Vec::new();
    let mut lookup = vec![None; na * nz];
    for a in 0..na {
        for z in 0..nz {
            if possible[a * nz + z] {
                lookup[a * nz + z] = Some(pairs.len());
                pairs.push((a, z));
            }
        }
    }
    // Histories beyond the strategy cap can never be enumerated anyway.
    let space = HistorySpace::new(spec.recall[player], pairs.len(), opts.cap.max(64))?;
    Ok(PrivateHistories {
        space,
        pairs,
        lookup,
        signal_count: nz,
    })
}

fn strategy_count(actions: usize, histories: usize, cap: usize, player: usize) -> Result<usize> {
    let mut count: u128 = 1;
    for _ in 0..histories {
        count = count.saturating_mul(actions as u128);
        if count > cap as u128 {
            let required = if (histories as f64) * (actions as f64).log2() < 120.0 {
                (actions as u128).pow(histories as u32).to_string()
            } else {
                format!("{actions}^{histories}")
            };
            return Err(Error::Capacity {
                what: format!("pure strategies for player {player}"),
                required,
                cap,
            });
        }
    }
    Ok(count as usize)
}

impl StrategySpace {
    pub fn new(spec: &RepeatedGameSpec, opts: EnumerationOptions) -> Result<Self> {
        let n = spec.player_count();
        let mut histories = Vec::with_capacity(n);
        let mut strategy_counts = Vec::with_capacity(n);
        let mut tables = Vec::with_capacity(n);
        for i in 0..n {
            let hs = private_histories(spec, i, &opts)?;
            let na = spec.stage.action_counts()[i];
            let h = hs.count();
            let count = strategy_count(na, h, opts.cap, i)?;
            let mut table = vec![0u16; count * h];
            for s in 0..count {
                let mut rest = s;
                for slot in (0..h).rev() {
                    table[s * h + slot] = (rest % na) as u16;
                    rest /= na;
                }
            }
            histories.push(hs);
            strategy_counts.push(count);
            tables.push(table);
        }
        Ok(Self {
            histories,
            action_counts: spec.stage.action_counts().to_vec(),
            strategy_counts,
            tables,
            options: opts,
        })
    }

    pub fn player_count(&self) -> usize {
        self.histories.len()
    }

    pub fn histories(&self, player: usize) -> &PrivateHistories {
        &self.histories[player]
    }

    pub fn history_count(&self, player: usize) -> usize {
        self.histories[player].count()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn action_count(&self, player: usize) -> usize {
        self.action_counts[player]
    }

    pub fn options(&self) -> EnumerationOptions {
        self.options
    }

    /// Action of pure strategy `s` of `player` after history `h`.
    #[inline]
    pub fn action(&self, player: usize, s: usize, h: usize) -> usize {
        self.tables[player][s * self.history_count(player) + h] as usize
    }

    pub fn table(&self, player: usize, s: usize) -> Vec<usize> {
        let h = self.history_count(player);
        self.tables[player][s * h..(s + 1) * h].iter().map(|&a| a as usize).collect()
    }

    pub fn pure_strategy(&self, player: usize, s: usize) -> PureStrategy {
        PureStrategy {
            player,
            index: s,
            table: self.table(player, s),
        }
    }

    /// Index of the pure strategy with the given action table.
    pub fn index_of(&self, player: usize, table: &[usize]) -> Result<usize> {
        let na = self.action_counts[player];
        if table.len() != self.history_count(player) || table.iter().any(|&a| a >= na) {
            return Err(Error::invalid(format!("not a valid action table for player {player}")));
        }
        Ok(table.iter().fold(0, |acc, &a| acc * na + a))
    }

    /// Index of the strategy that plays `rule(history)` after every history.
    pub fn index_from_rule(&self, player: usize, mut rule: impl FnMut(&[(usize, usize)]) -> usize) -> Result<usize> {
        let hs = &self.histories[player];
        let table: Vec<usize> = (0..hs.count()).map(|h| rule(&hs.decode(h))).collect();
        self.index_of(player, &table)
    }
}

/// All pure strategies of `player`, in enumeration order.
pub fn enumerate_pure_strategies(spec: &RepeatedGameSpec, player: usize, opts: EnumerationOptions) -> Result<Vec<PureStrategy>> {
    if player >= spec.player_count() {
        return Err(Error::invalid(format!("no player {player}")));
    }
    let hs = private_histories(spec, player, &opts)?;
    let na = spec.stage.action_counts()[player];
    let h = hs.count();
    let count = strategy_count(na, h, opts.cap, player)?;
    Ok((0..count)
        .map(|s| {
            let mut table = vec![0; h];
            let mut rest = s;
            for slot in table.iter_mut().rev() {
                *slot = rest % na;
                rest /= na;
            }
            PureStrategy {
                player,
                index: s,
                table,
            }
        })
        .collect())
}

/// One mixed strategy (a point on the simplex over pure strategies) per player.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyProfile {
    weights: Vec<Vec<f64>>,
}

impl StrategyProfile {
    pub fn new(space: &StrategySpace, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != space.player_count() {
            return Err(Error::invalid(format!(
                "profile has {} players, expected {}",
                weights.len(),
                space.player_count()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.len() != space.strategy_counts()[i] {
                return Err(Error::invalid(format!(
                    "player {i}: {} weights for {} pure strategies",
                    w.len(),
                    space.strategy_counts()[i]
                )));
            }
            check_distribution(w, &format!("player {i} mixed strategy"))?;
        }
        Ok(Self { weights })
    }

    /// Wraps weights without validation; callers guarantee simplex membership.
    pub(crate) fn from_raw(weights: Vec<Vec<f64>>) -> Self {
        Self { weights }
    }

    pub fn pure(space: &StrategySpace, indices: &[usize]) -> Result<Self> {
        if indices.len() != space.player_count() {
            return Err(Error::invalid("one pure strategy index per player expected"));
        }
        let mut weights = Vec::with_capacity(indices.len());
        for (i, &s) in indices.iter().enumerate() {
            let count = space.strategy_counts()[i];
            if s >= count {
                return Err(Error::invalid(format!("player {i} has no pure strategy {s}")));
            }
            let mut w = vec![0.0; count];
            w[s] = 1.0;
            weights.push(w);
        }
        Ok(Self { weights })
    }

    pub fn uniform(space: &StrategySpace) -> Self {
        Self {
            weights: space.strategy_counts().iter().map(|&c| vec![1.0 / c as f64; c]).collect(),
        }
    }

    /// Uniform draw from the product of open simplices (flat Dirichlet per player).
    pub fn random_interior<R: Rng + ?Sized>(space: &StrategySpace, rng: &mut R) -> Self {
        let weights = space
            .strategy_counts()
            .iter()
            .map(|&c| {
                let mut w: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(rand_distr::Exp1) + f64::MIN_POSITIVE).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                w
            })
            .collect();
        Self { weights }
    }

    pub fn player_count(&self) -> usize {
        self.weights.len()
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<Vec<f64>> {
        self.weights
    }

    /// Replaces player `i`'s mixed strategy.
    pub fn with_player(&self, i: usize, weights: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.weights[i] = weights;
        out
    }

    pub fn support(&self, i: usize) -> Vec<(usize, f64)> {
        self.weights[i].iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(s, &w)| (s, w)).collect()
    }

    /// The pure strategy indices if every player is pure.
    pub fn as_pure(&self) -> Option<Vec<usize>> {
        self.weights
            .iter()
            .map(|w| {
                let mut it = w.iter().enumerate().filter(|(_, &x)| x > 0.0);
                match (it.next(), it.next()) {
                    (Some((s, _)), None) => Some(s),
                    _ => None,
                }
            })
            .collect()
    }

    /// Largest deviation from simplex membership over all players.
    pub fn simplex_violation(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| {
                let neg = w.iter().fold(0.0f64, |m, &x| m.max(-x));
                neg.max((w.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Euclidean distance in the product of simplices.
    pub fn distance(&self, other: &StrategyProfile) -> f64 {
        self.weights
            .iter()
            .flatten()
            .zip(other.weights.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Reachability and discounted occupancy of every private history under one
/// pure profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PurePath {
    pub reach: Vec<Vec<bool>>,
    /// Expected discounted number of periods in which the history is the
    /// player's current decision point.
    pub occupancy: Vec<Vec<f64>>,
}

/// Anything that can describe the play of a pure profile.
pub trait PathSource {
    fn space(&self) -> &StrategySpace;
    fn path(&self, profile: &[usize]) -> Cow<'_, PurePath>;
}

/// Per-player reachability and conditional action distributions induced by a
/// mixed profile.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedPlay {
    pub reach: Vec<Vec<bool>>,
    /// `conditional[i][h][a]`; all zeros for unreachable histories.
    pub conditional: Vec<Vec<Vec<f64>>>,
}

/// Calls `f(indices, weight)` for every combination drawn from `supports`,
/// with the last list varying fastest.
pub(crate) fn for_each_product(supports: &[Vec<(usize, f64)>], mut f: impl FnMut(&[usize], f64)) {
    if supports.iter().any(Vec::is_empty) {
        return;
    }
    let n = supports.len();
    let mut digits = vec![0usize; n];
    let mut idx = vec![0usize; n];
    loop {
        let mut w = 1.0;
        for i in 0..n {
            let (s, x) = supports[i][digits[i]];
            idx[i] = s;
            w *= x;
        }
        f(&idx, w);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < supports[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Calls `f(indices, weight)` for every pure profile in the support of `profile`.
pub(crate) fn for_each_support_profile(profile: &StrategyProfile, f: impl FnMut(&[usize], f64)) {
    let supports: Vec<Vec<(usize, f64)>> = (0..profile.player_count()).map(|i| profile.support(i)).collect();
    for_each_product(&supports, f);
}

/// Reachability and conditional play of every private history under `profile`.
///
/// A history is reachable when some pure profile in the support reaches it.
/// The conditional action distribution weights each support profile by its
/// probability times its discounted occupancy of the history.
pub fn induced_play(src: &dyn PathSource, profile: &StrategyProfile) -> InducedPlay {
    let space = src.space();
    let n = space.player_count();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| vec![false; space.history_count(i)]).collect();
    let mut mass: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| vec![vec![0.0; space.action_count(i)]; space.history_count(i)])
        .collect();
    // Fallback weights for histories whose occupancy underflows to zero.
    let mut raw = mass.clone();
    for_each_support_profile(profile, |idx, w| {
        let path = src.path(idx);
        for i in 0..n {
            for (h, &r) in path.reach[i].iter().enumerate() {
                if r {
                    reach[i][h] = true;
                    let a = space.action(i, idx[i], h);
                    mass[i][h][a] += w * path.occupancy[i][h];
                    raw[i][h][a] += w;
                }
            }
        }
    });
    let conditional = mass
        .into_iter()
        .zip(raw)
        .map(|(per_h, raw_h)| {
            per_h
                .into_iter()
                .zip(raw_h)
                .map(|(m, r)| {
                    let total: f64 = m.iter().sum();
                    if total > 0.0 {
                        m.iter().map(|x| x / total).collect()
                    } else {
                        let total: f64 = r.iter().sum();
                        if total > 0.0 {
                            r.iter().map(|x| x / total).collect()
                        } else {
                            m
                        }
                    }
                })
                .collect()
        })
        .collect();
    InducedPlay { reach, conditional }
}

/// Private histories observed with positive probability, per player.
pub fn reachable_histories(src: &dyn PathSource, profile: &StrategyProfile) -> Vec<Vec<usize>> {
    induced_play(src, profile)
        .reach
        .into_iter()
        .map(|r| r.into_iter().enumerate().filter(|(_, x)| *x).map(|(h, _)| h).collect())
        .collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Whether two profiles lie in the same on-path equivalence class.
pub fn same_class(src: &dyn PathSource, a: &StrategyProfile, b: &StrategyProfile) -> bool {
    let pa = induced_play(src, a);
    let pb = induced_play(src, b);
    pa.reach.iter().zip(&pb.reach).enumerate().all(|(i, (ra, rb))| {
        ra.iter().zip(rb).enumerate().all(|(h, (&x, &y))| {
            x == y
                && (!x
                    || pa.conditional[i][h]
                        .iter()
                        .zip(&pb.conditional[i][h])
                        .all(|(p, q)| (p - q).abs() <= CLASS_TOL))
        })
    })
}

/// Distance from `profile` to the equivalence class of `target`: the largest
/// total-variation gap between conditional play on histories reachable under
/// both, plus one for every history reachable under exactly one of them.
pub fn distance_to_class(src: &dyn PathSource, profile: &StrategyProfile, target: &StrategyProfile) -> f64 {
    let p = induced_play(src, profile);
    let t = induced_play(src, target);
    let mut worst = 0.0f64;
    let mut mismatched = 0usize;
    for i in 0..p.reach.len() {
        for h in 0..p.reach[i].len() {
            match (p.reach[i][h], t.reach[i][h]) {
                (true, true) => {
                    worst = worst.max(total_variation(&p.conditional[i][h], &t.conditional[i][h]));
                }
                (false, false) => {}
                _ => mismatched += 1,
            }
        }
    }
    let d = worst + mismatched as f64;
    if d <= CLASS_TOL {
        0.0
    } else {
        d
    }
}

/// A profile in the class of `profile` obtained by re-drawing every support
/// strategy's actions at histories its owner never reaches.
pub fn in_class_variant<R: Rng + ?Sized>(src: &dyn PathSource, profile: &StrategyProfile, rng: &mut R) -> StrategyProfile {
    let space = src.space();
    let play = induced_play(src, profile);
    let weights = (0..space.player_count())
        .map(|i| {
            let mut w = vec![0.0; space.strategy_counts()[i]];
            for (s, x) in profile.support(i) {
                let mut table = space.table(i, s);
                for (h, slot) in table.iter_mut().enumerate() {
                    if !play.reach[i][h] {
                        *slot = rng.random_range(0..space.action_count(i));
                    }
                }
                let s2 = space.index_of(i, &table).expect("table stays in range");
                w[s2] += x;
            }
            w
        })
        .collect();
    StrategyProfile::from_raw(weights)
}
