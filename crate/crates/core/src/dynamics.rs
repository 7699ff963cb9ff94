//! The q-gradient, Euclidean projection onto the simplex, and the exact
//! projected q-replicator process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategy::{distance_to_class, StrategyProfile};
use crate::valuation::MetaGame;

/// `x^q` with `0^0 = 1`.
#[inline]
pub fn q_weight(x: f64, q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else if q == 1.0 {
        x
    } else {
        x.powf(q)
    }
}

/// Applies the q-weighting to per-strategy payoffs `u` at weights `pi`:
/// `v_α = π_α^q (u_α − Σ_β π_β^q u_β / Σ_β π_β^q)`.
pub fn q_direction(u: &[f64], pi: &[f64], q: f64) -> Vec<f64> {
    let w: Vec<f64> = pi.iter().map(|&x| q_weight(x, q)).collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return vec![0.0; u.len()];
    }
    let mean = w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / total;
    w.iter().zip(u).map(|(a, b)| a * (b - mean)).collect()
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::invalid(format!("q must be a finite nonnegative number, got {q}")));
    }
    Ok(())
}

fn check_dims(meta: &MetaGame, profile: &StrategyProfile) -> Result<()> {
    if profile.player_count() != meta.player_count()
        || profile.weights().iter().zip(meta.strategy_counts()).any(|(w, &c)| w.len() != c)
    {
        return Err(Error::invalid("profile dimensions do not match the meta-game"));
    }
    Ok(())
}

/// Per-player q-gradient together with the per-player values `V_i(π)`.
pub(crate) fn gradient_and_values(meta: &MetaGame, profile: &StrategyProfile, q: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut grads = Vec::with_capacity(meta.player_count());
    let mut values = Vec::with_capacity(meta.player_count());
    for i in 0..meta.player_count() {
        let u = meta.payoff_against(i, profile);
        values.push(u.iter().zip(profile.player(i)).map(|(a, b)| a * b).sum());
        grads.push(q_direction(&u, profile.player(i), q));
    }
    (grads, values)
}

/// The q-gradient of every player's value at `profile`.
pub fn q_gradient(meta: &MetaGame, profile: &StrategyProfile, q: f64) -> Result<Vec<Vec<f64>>> {
    check_q(q)?;
    check_dims(meta, profile)?;
    Ok(gradient_and_values(meta, profile, q).0)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(point: &[f64]) -> Vec<f64> {
    if point.is_empty() {
        return Vec::new();
    }
    let mut sorted = point.to_vec();
    // Descending; the sort is stable so equal entries keep index order.
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    point.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn norm(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Step-size schedule and stopping rules shared by the exact and stochastic processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QReplicatorConfig {
    pub q: f64,
    /// Base step `γ_i` per player; a single entry applies to every player.
    pub gammas: Vec<f64>,
    pub p: f64,
    pub m: f64,
    pub max_steps: usize,
    /// Stop when the class distance to the target (or, without a target, the
    /// unit projected-gradient step) falls below this. Zero disables stopping.
    pub stop_tolerance: f64,
    /// Record a profile and a summary row every this many steps.
    pub record_stride: usize,
    /// Evaluate the stopping rule every this many steps.
    pub check_stride: usize,
}

impl Default for QReplicatorConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            gammas: vec![0.1],
            p: 1.0,
            m: 1.0,
            max_steps: 10_000,
            stop_tolerance: 0.0,
            record_stride: 1,
            check_stride: 1,
        }
    }
}

impl QReplicatorConfig {
    pub fn validate(&self, players: usize) -> Result<()> {
        check_q(self.q)?;
        if !(self.p > 0.5 && self.p <= 1.0) {
            return Err(Error::invalid(format!("decay power p must lie in (0.5, 1], got {}", self.p)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid(format!("offset m must be positive, got {}", self.m)));
        }
        if self.gammas.is_empty() || (self.gammas.len() != 1 && self.gammas.len() != players) {
            return Err(Error::invalid(format!("expected 1 or {players} base step sizes, got {}", self.gammas.len())));
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::invalid("base step sizes must be finite and nonnegative"));
        }
        if !(self.stop_tolerance >= 0.0) {
            return Err(Error::invalid("stop tolerance must be nonnegative"));
        }
        if self.record_stride == 0 || self.check_stride == 0 {
            return Err(Error::invalid("record and check strides must be positive"));
        }
        Ok(())
    }

    pub fn gamma(&self, player: usize) -> f64 {
        if self.gammas.len() == 1 {
            self.gammas[0]
        } else {
            self.gammas[player]
        }
    }

    /// `γ_i / (n + m)^p`.
    pub fn step_size(&self, player: usize, n: usize) -> f64 {
        self.gamma(player) / (n as f64 + self.m).powf(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub step_sizes: Vec<f64>,
    /// Norm of the (possibly estimated) q-gradient used at this step.
    pub gradient_norm: f64,
    /// Norm of the applied change `π^{n+1} − π^n`.
    pub step_norm: f64,
    pub distance: Option<f64>,
    /// `V_i(π^n)` when available.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MaxSteps,
    TargetReached,
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Recorded iterates `(n, π^n)`, always including the start and the end.
    pub profiles: Vec<(usize, StrategyProfile)>,
    pub records: Vec<StepRecord>,
    pub steps: usize,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn final_profile(&self) -> &StrategyProfile {
        &self.profiles.last().expect("trajectory has a start").1
    }

    pub fn final_distance(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.distance)
    }
}

/// Projected step `π_i ← proj(π_i + γ_i v_i)` for every player; returns the step norm.
pub(crate) fn projected_step(profile: &mut StrategyProfile, direction: &[Vec<f64>], steps: &[f64]) -> f64 {
    let mut weights = std::mem::take(profile).into_weights();
    let mut sq = 0.0;
    for (i, w) in weights.iter_mut().enumerate() {
        if steps[i] == 0.0 {
            continue;
        }
        let moved: Vec<f64> = w.iter().zip(&direction[i]).map(|(x, v)| x + steps[i] * v).collect();
        let next = project_simplex(&moved);
        sq += next.iter().zip(w.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        *w = next;
    }
    *profile = StrategyProfile::from_raw(weights);
    sq.sqrt()
}

/// Norm of the unit projected-gradient step, zero exactly at stationary points.
pub(crate) fn stationarity(profile: &StrategyProfile, direction: &[Vec<f64>]) -> f64 {
    let mut p = profile.clone();
    projected_step(&mut p, direction, &vec![1.0; direction.len()])
}

/// Runs the exact projected q-replicator process from `start`.
pub fn run_exact(
    meta: &MetaGame,
    start: &StrategyProfile,
    cfg: &QReplicatorConfig,
    target: Option<&StrategyProfile>,
) -> Result<Trajectory> {
    let n_players = meta.player_count();
    cfg.validate(n_players)?;
    check_dims(meta, start)?;
    if let Some(t) = target {
        check_dims(meta, t)?;
    }
    let mut profile = start.clone();
    let mut out = Trajectory {
        profiles: vec![(0, start.clone())],
        records: Vec::new(),
        steps: 0,
        stop: StopReason::MaxSteps,
    };
    let mut n = 0;
    loop {
        let (grad, values) = gradient_and_values(meta, &profile, cfg.q);
        let last = n == cfg.max_steps;
        let check = cfg.stop_tolerance > 0.0 && (n % cfg.check_stride == 0 || last);
        let record = n % cfg.record_stride == 0 || last;
        let distance = match target {
            Some(t) if check || record => Some(distance_to_class(meta, &profile, t)),
            _ => None,
        };
        let stop = if check {
            match (target, distance) {
                (Some(_), Some(d)) if d < cfg.stop_tolerance => Some(StopReason::TargetReached),
                (None, _) if stationarity(&profile, &grad) < cfg.stop_tolerance => Some(StopReason::Stationary),
                _ => None,
            }
        } else {
            None
        };
        let step_sizes: Vec<f64> = (0..n_players).map(|i| cfg.step_size(i, n)).collect();
        if last || stop.is_some() {
            out.records.push(StepRecord {
                n,
                step_sizes,
                gradient_norm: norm(&grad),
                step_norm: 0.0,
                distance,
                values,
            });
            if out.profiles.last().map(|(k, _)| *k) != Some(n) {
                out.profiles.push((n, profile.clone()));
            }
            out.steps = n;
            out.stop = stop.unwrap_or(StopReason::MaxSteps);
            return Ok(out);
        }
        let step_norm = projected_step(&mut profile, &grad, &step_sizes);
        if record {
            out.records.push(StepRecord {
                n,
                step_sizes,
                gradient_norm: norm(&grad),
                step_norm,
                distance,
                values,
            });
        }
        n += 1;
        if n % cfg.record_stride == 0 {
            out.profiles.push((n, profile.clone()));
        }
    }
}
