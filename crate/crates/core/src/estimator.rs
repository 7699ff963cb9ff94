//! REINFORCE estimates of the q-gradient from sampled episodes, the ε-greedy
//! stochastic q-replicator, and empirical noise/bias diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{gradient_and_values, projected_step, q_direction, QReplicatorConfig, StepRecord, StopReason, Trajectory};
use crate::error::{Error, Result};
use crate::game::RepeatedGameSpec;
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};
use crate::strategy::{distance_to_class, StrategyProfile, StrategySpace};
use crate::valuation::{sample_episode, Episode, MetaGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Per-period conditional scores of the mixture's induced action distribution.
    PaperLiteral,
    /// Likelihood ratio of the realised own-action sequence per pure strategy.
    PureScore,
}

impl EstimatorVariant {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorVariant::PaperLiteral => "paper_literal",
            EstimatorVariant::PureScore => "pure_score",
        }
    }
}

impl std::str::FromStr for EstimatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal" => Ok(EstimatorVariant::PaperLiteral),
            "pure_score" => Ok(EstimatorVariant::PureScore),
            other => Err(Error::invalid(format!("unknown estimator variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGreedyConfig {
    pub epsilon: f64,
    pub dynamics: QReplicatorConfig,
    pub variant: EstimatorVariant,
}

impl EpsilonGreedyConfig {
    pub fn validate(&self, players: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        self.dynamics.validate(players)
    }
}

/// Realised total rewards and per-player score vectors of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub rewards: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
}

fn log_sum_exp_weighted(logs: &[f64], weights: &[f64]) -> f64 {
    let max = logs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = logs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&l, &w)| w * (l - max).exp())
        .sum();
    max + s.ln()
}

fn pure_scores(space: &StrategySpace, weights: &[f64], player: usize, episode: &Episode, game_actions: &[usize], epsilon: f64) -> Result<Vec<f64>> {
    let na = space.action_count(player);
    let hcount = space.history_count(player);
    let mut counts = vec![0usize; hcount * na];
    for (t, h) in episode.histories.iter().enumerate() {
        counts[h[player] * na + game_actions[t]] += 1;
    }
    let tau = episode.len();
    let log_hit = (1.0 - epsilon + epsilon / na as f64).ln();
    let log_miss = (epsilon / na as f64).ln();
    let logs: Vec<f64> = (0..space.strategy_counts()[player])
        .map(|e| {
            let hits: usize = (0..hcount).map(|h| counts[h * na + space.action(player, e, h)]).sum();
            let misses = tau - hits;
            let mut l = 0.0;
            if hits > 0 {
                l += hits as f64 * log_hit;
            }
            if misses > 0 {
                l += misses as f64 * log_miss;
            }
            l
        })
        .collect();
    let log_mass = log_sum_exp_weighted(&logs, weights);
    if log_mass == f64::NEG_INFINITY {
        return Err(Error::internal(format!(
            "realised actions of player {player} have zero likelihood under the mixed strategy"
        )));
    }
    Ok(logs.iter().map(|l| (l - log_mass).exp()).collect())
}

fn literal_scores(space: &StrategySpace, weights: &[f64], player: usize, episode: &Episode, game_actions: &[usize], epsilon: f64) -> Result<Vec<f64>> {
    let na = space.action_count(player);
    let count = space.strategy_counts()[player];
    let mut score = vec![0.0; count];
    for (t, h) in episode.histories.iter().enumerate() {
        let h = h[player];
        let a = game_actions[t];
        let mass: f64 = (0..count)
            .filter(|&e| space.action(player, e, h) == a)
            .map(|e| weights[e])
            .sum();
        let cond = (1.0 - epsilon) * mass + epsilon / na as f64;
        if cond <= 0.0 {
            return Err(Error::internal(format!(
                "realised action of player {player} has zero conditional probability"
            )));
        }
        for (e, s) in score.iter_mut().enumerate() {
            if space.action(player, e, h) == a {
                *s += (1.0 - epsilon) / cond;
            }
        }
    }
    Ok(score)
}

/// Per-player realised total reward and score vector of an episode played
/// from the mixed profile `profile` with per-period exploration `epsilon`.
pub fn score_from_episode(
    spec: &RepeatedGameSpec,
    space: &StrategySpace,
    profile: &StrategyProfile,
    episode: &Episode,
    epsilon: f64,
    variant: EstimatorVariant,
) -> Result<ScoreRecord> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon must lie in [0, 1]"));
    }
    let n = spec.player_count();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let own: Vec<usize> = episode.actions.iter().map(|&p| spec.stage.action_of(p, i)).collect();
        let s = match variant {
            EstimatorVariant::PureScore => pure_scores(space, profile.player(i), i, episode, &own, epsilon)?,
            EstimatorVariant::PaperLiteral => literal_scores(space, profile.player(i), i, episode, &own, epsilon)?,
        };
        scores.push(s);
    }
    Ok(ScoreRecord {
        rewards: episode.total_rewards(),
        scores,
    })
}

/// REINFORCE q-gradient estimate: `ŵ = R·Λ`, then the q-weighted centring.
pub fn reinforce(reward: f64, score: &[f64], weights: &[f64], q: f64) -> Vec<f64> {
    let w: Vec<f64> = score.iter().map(|s| reward * s).collect();
    q_direction(&w, weights, q)
}

/// Something that produces (possibly random) q-gradient estimates.
pub trait GradientEstimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, profile: &StrategyProfile, rng: &mut SimRng) -> Result<Vec<Vec<f64>>>;
}

/// Single-episode REINFORCE estimator under ε-greedy execution.
pub struct Reinforce<'a> {
    pub spec: &'a RepeatedGameSpec,
    pub space: &'a StrategySpace,
    pub epsilon: f64,
    pub variant: EstimatorVariant,
    pub q: f64,
}

impl GradientEstimator for Reinforce<'_> {
    fn name(&self) -> String {
        self.variant.name().to_string()
    }

    fn estimate(&self, profile: &StrategyProfile, rng: &mut SimRng) -> Result<Vec<Vec<f64>>> {
        let ep = sample_episode(self.spec, self.space, profile, self.epsilon, rng);
        let rec = score_from_episode(self.spec, self.space, profile, &ep, self.epsilon, self.variant)?;
        Ok((0..profile.player_count())
            .map(|i| reinforce(rec.rewards[i], &rec.scores[i], profile.player(i), self.q))
            .collect())
    }
}

/// The exact q-gradient, as a degenerate estimator.
pub struct ExactGradient<'a> {
    pub meta: &'a MetaGame,
    pub q: f64,
}

impl GradientEstimator for ExactGradient<'_> {
    fn name(&self) -> String {
        "exact".into()
    }

    fn estimate(&self, profile: &StrategyProfile, _rng: &mut SimRng) -> Result<Vec<Vec<f64>>> {
        Ok(gradient_and_values(self.meta, profile, self.q).0)
    }
}

/// Runs the ε-greedy stochastic q-replicator: one episode per step.
pub fn run_stochastic(
    meta: &MetaGame,
    start: &StrategyProfile,
    cfg: &EpsilonGreedyConfig,
    seed: u64,
    target: Option<&StrategyProfile>,
) -> Result<Trajectory> {
    let n_players = meta.player_count();
    cfg.validate(n_players)?;
    let dyn_cfg = &cfg.dynamics;
    let spec = meta.spec();
    let space = meta.strategy_space();
    let mut rng = rng_from_seed(seed);
    let mut profile = start.clone();
    let mut out = Trajectory {
        profiles: vec![(0, start.clone())],
        records: Vec::new(),
        steps: 0,
        stop: StopReason::MaxSteps,
    };
    let mut n = 0;
    loop {
        let last = n == dyn_cfg.max_steps;
        let check = target.is_some() && dyn_cfg.stop_tolerance > 0.0 && (n % dyn_cfg.check_stride == 0 || last);
        let record = n % dyn_cfg.record_stride == 0 || last;
        let distance = match target {
            Some(t) if check || record => Some(distance_to_class(meta, &profile, t)),
            _ => None,
        };
        let reached = check && distance.is_some_and(|d| d < dyn_cfg.stop_tolerance);
        let step_sizes: Vec<f64> = (0..n_players).map(|i| dyn_cfg.step_size(i, n)).collect();
        if last || reached {
            out.records.push(StepRecord {
                n,
                step_sizes,
                gradient_norm: 0.0,
                step_norm: 0.0,
                distance,
                values: meta.mixed_value(&profile),
            });
            if out.profiles.last().map(|(k, _)| *k) != Some(n) {
                out.profiles.push((n, profile.clone()));
            }
            out.steps = n;
            out.stop = if reached { StopReason::TargetReached } else { StopReason::MaxSteps };
            return Ok(out);
        }
        let ep = sample_episode(spec, space, &profile, cfg.epsilon, &mut rng);
        let rec = score_from_episode(spec, space, &profile, &ep, cfg.epsilon, cfg.variant)?;
        let direction: Vec<Vec<f64>> = (0..n_players)
            .map(|i| reinforce(rec.rewards[i], &rec.scores[i], profile.player(i), dyn_cfg.q))
            .collect();
        let values = if record { meta.mixed_value(&profile) } else { Vec::new() };
        let step_norm = projected_step(&mut profile, &direction, &step_sizes);
        if record {
            out.records.push(StepRecord {
                n,
                step_sizes,
                gradient_norm: direction.iter().flatten().map(|x| x * x).sum::<f64>().sqrt(),
                step_norm,
                distance,
                values,
            });
        }
        n += 1;
        if n % dyn_cfg.record_stride == 0 {
            out.profiles.push((n, profile.clone()));
        }
    }
}

/// Empirical moments of the estimator at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseStep {
    pub n: usize,
    /// Empirical `E‖U‖²`, the summed per-coordinate sample variance.
    pub second_moment: f64,
    /// `‖mean(v̂) − v^q‖` against the exact game.
    pub bias_norm: f64,
    /// `‖mean(v̂) − v^q_ε‖` against the reference game, when one is given.
    pub estimator_bias_norm: Option<f64>,
    /// `‖v^q_ε − v^q‖`: bias due to exploration alone.
    pub exploration_bias_norm: Option<f64>,
    /// Largest per-coordinate |mean − reference| in standard errors.
    pub max_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseDiagnostics {
    pub estimator: String,
    pub samples: usize,
    pub steps: Vec<NoiseStep>,
    /// Fitted growth exponent of `σ^n = sqrt(E‖U‖²)`.
    pub ell_sigma: f64,
    /// Fitted decay exponent of the bias; infinite when no step shows a
    /// statistically significant bias.
    pub ell_b: f64,
    pub p: f64,
    /// `p + ℓ_b > 1`.
    pub bias_condition: bool,
    /// `p − ℓ_σ > 1/2`.
    pub variance_condition: bool,
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

fn diff_norm(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Measures the estimator's noise and bias along a sequence of profiles
/// `(n, π^n)`, drawing `samples` independent estimates per step.
///
/// `reference` is the game whose q-gradient the estimator targets without
/// bias (for ε-greedy REINFORCE, the ε-executed meta-game); `meta` is the
/// exact game.
pub fn diagnose_noise(
    meta: &MetaGame,
    reference: Option<&MetaGame>,
    sequence: &[(usize, StrategyProfile)],
    samples: usize,
    estimator: &dyn GradientEstimator,
    q: f64,
    p: f64,
    seed: u64,
) -> Result<NoiseDiagnostics> {
    if sequence.len() < 2 {
        return Err(Error::invalid("noise diagnostics need at least 2 steps"));
    }
    if samples < 30 {
        return Err(Error::invalid("noise diagnostics need at least 30 samples per step"));
    }
    let mut steps = Vec::with_capacity(sequence.len());
    for (k, (n, profile)) in sequence.iter().enumerate() {
        let draws: Vec<Vec<Vec<f64>>> = (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = rng_from_seed(derive_seed(seed, stream::DIAGNOSE, (k * samples + s) as u64));
                estimator.estimate(profile, &mut rng)
            })
            .collect::<Result<_>>()?;
        let shape: Vec<usize> = draws[0].iter().map(Vec::len).collect();
        let mut mean: Vec<Vec<f64>> = shape.iter().map(|&d| vec![0.0; d]).collect();
        for d in &draws {
            for (m, v) in mean.iter_mut().zip(d) {
                for (a, b) in m.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
        for m in mean.iter_mut().flatten() {
            *m /= samples as f64;
        }
        let mut var: Vec<Vec<f64>> = shape.iter().map(|&d| vec![0.0; d]).collect();
        for d in &draws {
            for ((s, v), m) in var.iter_mut().zip(d).zip(&mean) {
                for ((a, b), c) in s.iter_mut().zip(v).zip(m) {
                    *a += (b - c) * (b - c);
                }
            }
        }
        for s in var.iter_mut().flatten() {
            *s /= (samples - 1) as f64;
        }
        let exact = gradient_and_values(meta, profile, q).0;
        let target = reference.map(|r| gradient_and_values(r, profile, q).0);
        let against = target.as_ref().unwrap_or(&exact);
        let max_z = mean
            .iter()
            .flatten()
            .zip(against.iter().flatten())
            .zip(var.iter().flatten())
            .map(|((m, t), v)| {
                let se = (v / samples as f64).sqrt();
                let gap = (m - t).abs();
                if se > 0.0 {
                    gap / se
                } else if gap > 1e-12 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        steps.push(NoiseStep {
            n: *n,
            second_moment: var.iter().flatten().sum(),
            bias_norm: diff_norm(&mean, &exact),
            estimator_bias_norm: target.as_ref().map(|t| diff_norm(&mean, t)),
            exploration_bias_norm: target.as_ref().map(|t| diff_norm(t, &exact)),
            max_z,
        });
    }
    let log_n = |n: usize| ((n + 1) as f64).ln();
    let sigma_points: Vec<(f64, f64)> = steps
        .iter()
        .filter(|s| s.second_moment > 0.0)
        .map(|s| (log_n(s.n), 0.5 * s.second_moment.ln()))
        .collect();
    let ell_sigma = if sigma_points.len() >= 2 { fit_slope(&sigma_points).max(0.0) } else { 0.0 };
    // Bias against the exact game counts only when it exceeds sampling noise.
    let significant: Vec<&NoiseStep> = steps
        .iter()
        .filter(|s| {
            let se = (s.second_moment / samples as f64).sqrt();
            s.bias_norm > 3.0 * se && s.bias_norm > 1e-12
        })
        .collect();
    let ell_b = if significant.is_empty() {
        f64::INFINITY
    } else if significant.len() == 1 {
        0.0
    } else {
        let pts: Vec<(f64, f64)> = significant.iter().map(|s| (log_n(s.n), s.bias_norm.ln())).collect();
        -fit_slope(&pts)
    };
    Ok(NoiseDiagnostics {
        estimator: estimator.name(),
        samples,
        steps,
        ell_sigma,
        ell_b,
        p,
        bias_condition: p + ell_b > 1.0,
        variance_condition: p - ell_sigma > 0.5,
    })
}

/// Empirical mean and standard error of REINFORCE estimates at one profile.
pub fn estimate_mean<R: Rng + ?Sized>(
    estimator: &Reinforce<'_>,
    profile: &StrategyProfile,
    samples: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut sum: Vec<Vec<f64>> = profile.weights().iter().map(|w| vec![0.0; w.len()]).collect();
    let mut sq = sum.clone();
    let mut local = rng_from_seed(rng.random());
    for _ in 0..samples {
        let v = estimator.estimate(profile, &mut local)?;
        for ((s, q), x) in sum.iter_mut().zip(sq.iter_mut()).zip(&v) {
            for ((a, b), c) in s.iter_mut().zip(q.iter_mut()).zip(x) {
                *a += c;
                *b += c * c;
            }
        }
    }
    let k = samples as f64;
    let mean: Vec<Vec<f64>> = sum.iter().map(|s| s.iter().map(|a| a / k).collect()).collect();
    let se = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            q.iter()
                .zip(m)
                .map(|(b, a)| ((b / k - a * a).max(0.0) * k / (k - 1.0) / k).sqrt())
                .collect()
        })
        .collect();
    Ok((mean, se))
}
