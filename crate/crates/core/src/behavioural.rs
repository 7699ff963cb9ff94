//! Behavioural strategies over public finite-recall histories (perfect
//! monitoring, common recall): continuation values, the behavioural
//! q-gradient, strict subgame-perfection, and the behavioural process.

use serde::Serialize;

use crate::dynamics::{project_simplex, q_direction, QReplicatorConfig, StopReason};
use crate::error::{Error, Result};
use crate::game::{check_distribution, RepeatedGameSpec};
use crate::linalg::{self, Chain};
use crate::strategy::HistorySpace;

/// Margin a one-shot deviation must lose by.
pub const SPNE_TOL: f64 = 1e-9;
const HISTORY_CAP: usize = 1 << 16;

/// Per player, per public history, a distribution over own actions:
/// `conditionals[i][h][a]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BehaviouralProfile {
    pub conditionals: Vec<Vec<Vec<f64>>>,
}

/// `values[i][h]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationValueTable {
    pub values: Vec<Vec<f64>>,
}

/// A repeated game viewed through public histories of action profiles.
#[derive(Debug, Clone)]
pub struct BehaviouralGame {
    spec: RepeatedGameSpec,
    histories: HistorySpace,
}

impl BehaviouralGame {
    pub fn new(spec: &RepeatedGameSpec) -> Result<Self> {
        if !spec.monitoring.is_perfect() {
            return Err(Error::invalid("behavioural analysis requires perfect monitoring"));
        }
        let l = spec.recall[0];
        if spec.recall.iter().any(|&r| r != l) {
            return Err(Error::invalid("behavioural analysis requires a common recall length"));
        }
        let histories = HistorySpace::new(l, spec.stage.profile_count(), HISTORY_CAP)?;
        Ok(Self {
            spec: spec.clone(),
            histories,
        })
    }

    pub fn spec(&self) -> &RepeatedGameSpec {
        &self.spec
    }

    pub fn histories(&self) -> &HistorySpace {
        &self.histories
    }

    pub fn history_count(&self) -> usize {
        self.histories.count()
    }

    /// Validates and wraps per-player, per-history conditionals.
    pub fn profile(&self, conditionals: Vec<Vec<Vec<f64>>>) -> Result<BehaviouralProfile> {
        let n = self.spec.player_count();
        if conditionals.len() != n {
            return Err(Error::invalid(format!("expected {n} players")));
        }
        for (i, per_h) in conditionals.iter().enumerate() {
            if per_h.len() != self.history_count() {
                return Err(Error::invalid(format!(
                    "player {i}: {} histories given, expected {}",
                    per_h.len(),
                    self.history_count()
                )));
            }
            for (h, d) in per_h.iter().enumerate() {
                if d.len() != self.spec.stage.action_counts()[i] {
                    return Err(Error::invalid(format!("player {i}, history {h}: wrong action count")));
                }
                check_distribution(d, &format!("player {i} history {h}"))?;
            }
        }
        Ok(BehaviouralProfile { conditionals })
    }

    /// Profile playing `rule(player, history as profile sequence)` purely.
    pub fn pure_profile(&self, mut rule: impl FnMut(usize, &[usize]) -> usize) -> BehaviouralProfile {
        let conditionals = (0..self.spec.player_count())
            .map(|i| {
                let na = self.spec.stage.action_counts()[i];
                (0..self.history_count())
                    .map(|h| {
                        let a = rule(i, &self.histories.decode(h));
                        (0..na).map(|k| if k == a { 1.0 } else { 0.0 }).collect()
                    })
                    .collect()
            })
            .collect();
        BehaviouralProfile { conditionals }
    }

    pub fn uniform(&self) -> BehaviouralProfile {
        let conditionals = (0..self.spec.player_count())
            .map(|i| {
                let na = self.spec.stage.action_counts()[i];
                vec![vec![1.0 / na as f64; na]; self.history_count()]
            })
            .collect();
        BehaviouralProfile { conditionals }
    }

    fn check(&self, profile: &BehaviouralProfile) -> Result<()> {
        let ok = profile.conditionals.len() == self.spec.player_count()
            && profile.conditionals.iter().enumerate().all(|(i, per_h)| {
                per_h.len() == self.history_count()
                    && per_h.iter().all(|d| d.len() == self.spec.stage.action_counts()[i])
            });
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("behavioural profile does not match the game"))
        }
    }

    fn solve(&self, profile: &BehaviouralProfile) -> Result<Vec<Vec<f64>>> {
        let game = &self.spec.stage;
        let n = game.player_count();
        let hc = self.history_count();
        let mut chain = Chain {
            states: hc,
            transitions: Vec::new(),
        };
        let mut rewards = vec![vec![0.0; hc]; n];
        for h in 0..hc {
            let dists: Vec<Vec<f64>> = (0..n).map(|i| profile.conditionals[i][h].clone()).collect();
            for a in 0..game.profile_count() {
                let p = game.profile_probability(a, &dists);
                if p == 0.0 {
                    continue;
                }
                for (i, r) in rewards.iter_mut().enumerate() {
                    r[h] += p * game.reward(a, i);
                }
                chain.transitions.push((h, self.histories.push(h, a), p));
            }
        }
        Ok(linalg::solve(&chain, self.spec.delta, &rewards)?.values)
    }

    /// `V_{i,h}` for every player and public history.
    pub fn continuation_values(&self, profile: &BehaviouralProfile) -> Result<ContinuationValueTable> {
        self.check(profile)?;
        Ok(ContinuationValueTable {
            values: self.solve(profile)?,
        })
    }

    /// `V_{i,h}` after replacing player `i`'s conditional at `h` by pure `a`.
    fn deviation_value(&self, profile: &mut BehaviouralProfile, i: usize, h: usize, a: usize) -> Result<f64> {
        let saved = std::mem::take(&mut profile.conditionals[i][h]);
        let na = saved.len();
        profile.conditionals[i][h] = (0..na).map(|k| if k == a { 1.0 } else { 0.0 }).collect();
        let v = self.solve(profile).map(|vals| vals[i][h]);
        profile.conditionals[i][h] = saved;
        v
    }

    /// Behavioural q-gradient `[i][h][α]`.
    pub fn q_gradient(&self, profile: &BehaviouralProfile, q: f64) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check(profile)?;
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::invalid("q must be a finite nonnegative number"));
        }
        let mut work = profile.clone();
        let n = self.spec.player_count();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let na = self.spec.stage.action_counts()[i];
            let mut per_h = Vec::with_capacity(self.history_count());
            for h in 0..self.history_count() {
                let u: Vec<f64> = (0..na)
                    .map(|a| self.deviation_value(&mut work, i, h, a))
                    .collect::<Result<_>>()?;
                per_h.push(q_direction(&u, &profile.conditionals[i][h], q));
            }
            out.push(per_h);
        }
        Ok(out)
    }

    /// One-shot-deviation check of strict subgame perfection.
    pub fn check_strict_spne(&self, profile: &BehaviouralProfile) -> Result<SpneReport> {
        self.check(profile)?;
        let base = self.solve(profile)?;
        let mut work = profile.clone();
        let mut report = SpneReport {
            is_strict: true,
            is_pure: true,
            worst: None,
        };
        for i in 0..self.spec.player_count() {
            for h in 0..self.history_count() {
                let d = &profile.conditionals[i][h];
                let Some(played) = d.iter().position(|&x| x >= 1.0 - SPNE_TOL) else {
                    report.is_pure = false;
                    report.is_strict = false;
                    continue;
                };
                for a in (0..d.len()).filter(|&a| a != played) {
                    let margin = base[i][h] - self.deviation_value(&mut work, i, h, a)?;
                    if report.worst.as_ref().is_none_or(|w| margin < w.margin) {
                        report.worst = Some(OneShotDeviation {
                            player: i,
                            history: h,
                            action: a,
                            margin,
                        });
                    }
                    if margin <= SPNE_TOL {
                        report.is_strict = false;
                    }
                }
            }
        }
        Ok(report)
    }

    /// Largest total-variation gap between conditionals over all players and histories.
    pub fn distance(&self, a: &BehaviouralProfile, b: &BehaviouralProfile) -> f64 {
        a.conditionals
            .iter()
            .flatten()
            .zip(b.conditionals.iter().flatten())
            .map(|(x, y)| 0.5 * x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Per-history projected behavioural q-replicator process.
    pub fn run(&self, start: &BehaviouralProfile, cfg: &QReplicatorConfig, target: Option<&BehaviouralProfile>) -> Result<BehaviouralTrajectory> {
        self.check(start)?;
        cfg.validate(self.spec.player_count())?;
        let mut profile = start.clone();
        let mut out = BehaviouralTrajectory {
            profiles: vec![(0, start.clone())],
            records: Vec::new(),
            steps: 0,
            stop: StopReason::MaxSteps,
        };
        let mut n = 0;
        loop {
            let grad = self.q_gradient(&profile, cfg.q)?;
            let gradient_norm = grad.iter().flatten().flatten().map(|x| x * x).sum::<f64>().sqrt();
            let distance = target.map(|t| self.distance(&profile, t));
            let last = n == cfg.max_steps;
            let reached = cfg.stop_tolerance > 0.0
                && match distance {
                    Some(d) => d < cfg.stop_tolerance,
                    None => gradient_norm < cfg.stop_tolerance,
                };
            if n % cfg.record_stride == 0 || last || reached {
                out.records.push(BehaviouralRecord { n, gradient_norm, distance });
            }
            if last || reached {
                if out.profiles.last().map(|(k, _)| *k) != Some(n) {
                    out.profiles.push((n, profile.clone()));
                }
                out.steps = n;
                out.stop = if reached {
                    if target.is_some() {
                        StopReason::TargetReached
                    } else {
                        StopReason::Stationary
                    }
                } else {
                    StopReason::MaxSteps
                };
                return Ok(out);
            }
            for (i, per_h) in profile.conditionals.iter_mut().enumerate() {
                let step = cfg.step_size(i, n);
                for (d, g) in per_h.iter_mut().zip(&grad[i]) {
                    let moved: Vec<f64> = d.iter().zip(g).map(|(x, v)| x + step * v).collect();
                    *d = project_simplex(&moved);
                }
            }
            n += 1;
            if n % cfg.record_stride == 0 {
                out.profiles.push((n, profile.clone()));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneShotDeviation {
    pub player: usize,
    pub history: usize,
    pub action: usize,
    /// `V_{i,h}(π*) − V_{i,h}(deviation)`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpneReport {
    pub is_strict: bool,
    /// Whether every conditional is a point mass.
    pub is_pure: bool,
    /// The deviation with the smallest margin.
    pub worst: Option<OneShotDeviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviouralRecord {
    pub n: usize,
    pub gradient_norm: f64,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviouralTrajectory {
    pub profiles: Vec<(usize, BehaviouralProfile)>,
    pub records: Vec<BehaviouralRecord>,
    pub steps: usize,
    pub stop: StopReason,
}

impl BehaviouralTrajectory {
    pub fn final_profile(&self) -> &BehaviouralProfile {
        &self.profiles.last().expect("trajectory has a start").1
    }
}

/// Free-function form of [`BehaviouralGame::continuation_values`].
pub fn continuation_values(spec: &RepeatedGameSpec, profile: &BehaviouralProfile) -> Result<ContinuationValueTable> {
    BehaviouralGame::new(spec)?.continuation_values(profile)
}

/// Free-function form of [`BehaviouralGame::q_gradient`].
pub fn behavioural_q_gradient(spec: &RepeatedGameSpec, profile: &BehaviouralProfile, q: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    BehaviouralGame::new(spec)?.q_gradient(profile, q)
}

/// Free-function form of [`BehaviouralGame::check_strict_spne`].
pub fn check_strict_spne(spec: &RepeatedGameSpec, profile: &BehaviouralProfile) -> Result<SpneReport> {
    BehaviouralGame::new(spec)?.check_strict_spne(profile)
}

/// Free-function form of [`BehaviouralGame::run`].
pub fn run_behavioural(
    spec: &RepeatedGameSpec,
    start: &BehaviouralProfile,
    cfg: &QReplicatorConfig,
    target: Option<&BehaviouralProfile>,
) -> Result<BehaviouralTrajectory> {
    BehaviouralGame::new(spec)?.run(start, cfg, target)
}
