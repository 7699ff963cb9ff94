//! Equilibrium certification by pure-deviation enumeration, and the
//! variational first-order conditions around a profile.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{gradient_and_values, project_simplex};
use crate::error::Result;
use crate::game::{perfect_monitoring, RepeatedGameSpec, StageGame};
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};
use crate::strategy::{distance_to_class, same_class, StrategyProfile};
use crate::valuation::MetaGame;

/// Deviation gains within this tolerance count as ties.
pub const GAIN_TOL: f64 = 1e-9;
/// Sampled inner products must fall below `-C2_TOL` times the probe's Euclidean offset.
pub const C2_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub player: usize,
    pub strategy: usize,
    /// `V_i(e, π*_{-i}) − V_i(π*)`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    pub is_strict: bool,
    /// The most profitable pure deviation over all players.
    pub worst_deviation: Deviation,
    /// Whether the most profitable deviation stays in the class of π*
    /// (only evaluated by the strictness check).
    pub class_note: Option<bool>,
    /// A non-losing deviation that leaves the class, if any.
    pub offending: Option<Deviation>,
    /// Smallest loss among strictly losing deviations.
    pub min_losing_margin: Option<f64>,
    pub values: Vec<f64>,
}

fn deviation_gains(meta: &MetaGame, profile: &StrategyProfile) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut gains = Vec::with_capacity(meta.player_count());
    let mut values = Vec::with_capacity(meta.player_count());
    for i in 0..meta.player_count() {
        let u = meta.payoff_against(i, profile);
        let v: f64 = u.iter().zip(profile.player(i)).map(|(a, b)| a * b).sum();
        gains.push(u.iter().map(|x| x - v).collect());
        values.push(v);
    }
    (gains, values)
}

fn worst(gains: &[Vec<f64>]) -> Deviation {
    let mut best = Deviation {
        player: 0,
        strategy: 0,
        gain: f64::NEG_INFINITY,
    };
    for (i, g) in gains.iter().enumerate() {
        for (s, &x) in g.iter().enumerate() {
            if x > best.gain {
                best = Deviation {
                    player: i,
                    strategy: s,
                    gain: x,
                };
            }
        }
    }
    best
}

/// Nash check against every pure deviation.
pub fn check_equilibrium(meta: &MetaGame, profile: &StrategyProfile) -> EquilibriumReport {
    let (gains, values) = deviation_gains(meta, profile);
    let worst_deviation = worst(&gains);
    EquilibriumReport {
        is_equilibrium: worst_deviation.gain <= GAIN_TOL,
        is_strict: false,
        worst_deviation,
        class_note: None,
        offending: None,
        min_losing_margin: None,
        values,
    }
}

fn deviate(profile: &StrategyProfile, player: usize, strategy: usize) -> StrategyProfile {
    let mut w = vec![0.0; profile.player(player).len()];
    w[strategy] = 1.0;
    profile.with_player(player, w)
}

/// Strictness: every pure deviation either loses by more than the tolerance
/// or keeps play in the class of `profile`.
pub fn check_strict(meta: &MetaGame, profile: &StrategyProfile) -> EquilibriumReport {
    let (gains, values) = deviation_gains(meta, profile);
    let worst_deviation = worst(&gains);
    let is_equilibrium = worst_deviation.gain <= GAIN_TOL;
    let mut offending = None;
    let mut min_losing_margin: Option<f64> = None;
    let mut class_note = None;
    for (i, g) in gains.iter().enumerate() {
        for (s, &gain) in g.iter().enumerate() {
            if gain < -GAIN_TOL {
                min_losing_margin = Some(min_losing_margin.map_or(-gain, |m| m.min(-gain)));
                continue;
            }
            let in_class = same_class(meta, &deviate(profile, i, s), profile);
            if i == worst_deviation.player && s == worst_deviation.strategy {
                class_note = Some(in_class);
            }
            if !in_class && offending.is_none() {
                offending = Some(Deviation { player: i, strategy: s, gain });
            }
        }
    }
    if class_note.is_none() {
        let d = worst_deviation;
        class_note = Some(same_class(meta, &deviate(profile, d.player, d.strategy), profile));
    }
    EquilibriumReport {
        is_equilibrium,
        is_strict: is_equilibrium && offending.is_none(),
        worst_deviation,
        class_note,
        offending,
        min_losing_margin,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalReport {
    /// `⟨v^q(π*), π − π*⟩ ≤ 0` for every vertex π.
    pub c1_holds: bool,
    /// Maximum of the linear form over vertices.
    pub c1_value: f64,
    /// Per player, the pure strategy attaining the maximum.
    pub c1_vertex: Vec<usize>,
    /// `⟨v^q(π), π − π*⟩ < 0` on every out-of-class probe.
    pub c2_holds: bool,
    /// Largest inner product among out-of-class probes at the accepted radius.
    pub c2_max: f64,
    pub epsilon_used: f64,
    pub samples: usize,
    /// Probes excluded because they lie in the class of π*.
    pub excluded_in_class: usize,
}

fn inner_product(meta: &MetaGame, at: &StrategyProfile, center: &StrategyProfile, q: f64) -> f64 {
    let (grad, _) = gradient_and_values(meta, at, q);
    grad.iter()
        .zip(at.weights().iter().zip(center.weights()))
        .map(|(g, (a, c))| g.iter().zip(a.iter().zip(c)).map(|(x, (y, z))| x * (y - z)).sum::<f64>())
        .sum()
}

/// Uniform draw from the radius-`radius` ball around `center`, projected back
/// onto each player's simplex.
pub fn sample_ball<R: Rng + ?Sized>(center: &StrategyProfile, radius: f64, rng: &mut R) -> StrategyProfile {
    let dim: usize = center.weights().iter().map(Vec::len).sum();
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    let mut k = 0;
    let weights = center
        .weights()
        .iter()
        .map(|w| {
            let moved: Vec<f64> = w
                .iter()
                .map(|x| {
                    let y = x + r * dir[k] / len;
                    k += 1;
                    y
                })
                .collect();
            project_simplex(&moved)
        })
        .collect();
    StrategyProfile::from_raw(weights)
}

/// Deterministic probes from `center` toward every pure strategy of every player.
fn edge_probes(center: &StrategyProfile, radius: f64) -> Vec<StrategyProfile> {
    let mut out = Vec::new();
    for i in 0..center.player_count() {
        let w = center.player(i);
        let norm = (w.iter().map(|x| x * x).sum::<f64>()).sqrt();
        for s in 0..w.len() {
            if w[s] >= 1.0 {
                continue;
            }
            // Distance from center to the vertex e_s.
            let gap = (norm * norm - 2.0 * w[s] + 1.0).max(0.0).sqrt();
            for frac in [1.0, 0.25] {
                let t = (frac * radius / gap).min(1.0);
                let moved: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (1.0 - t) * x + if k == s { t } else { 0.0 })
                    .collect();
                out.push(center.with_player(i, moved));
            }
        }
    }
    out
}

struct C2Outcome {
    holds: bool,
    max: f64,
    excluded: usize,
}

fn probe_c2(meta: &MetaGame, center: &StrategyProfile, q: f64, radius: f64, samples: usize, rng: &mut SimRng) -> C2Outcome {
    let mut out = C2Outcome {
        holds: true,
        max: f64::NEG_INFINITY,
        excluded: 0,
    };
    let visit = |p: &StrategyProfile, out: &mut C2Outcome| -> bool {
        let v = inner_product(meta, p, center, q);
        // The inner product shrinks with the probe's offset, so the noise floor does too.
        if v >= -C2_TOL * p.distance(center) {
            if distance_to_class(meta, p, center) == 0.0 {
                out.excluded += 1;
                return true;
            }
            out.holds = false;
            out.max = out.max.max(v);
            return false;
        }
        out.max = out.max.max(v);
        true
    };
    for p in edge_probes(center, radius) {
        if !visit(&p, &mut out) {
            return out;
        }
    }
    for _ in 0..samples {
        let p = sample_ball(center, radius, rng);
        if !visit(&p, &mut out) {
            return out;
        }
    }
    out
}

/// Checks the vertex condition exactly and the neighbourhood condition on
/// `samples` random probes (plus edge probes), retrying at ε/2 and ε/4.
pub fn check_variational(meta: &MetaGame, center: &StrategyProfile, q: f64, epsilon: f64, samples: usize, seed: u64) -> VariationalReport {
    let mut report = c1_only(meta, center, q, epsilon, samples);
    let mut rng = rng_from_seed(derive_seed(seed, stream::VARIATIONAL, 0));
    let mut radius = epsilon;
    for attempt in 0..3 {
        let out = probe_c2(meta, center, q, radius, samples, &mut rng);
        report.excluded_in_class += out.excluded;
        report.c2_max = out.max;
        report.epsilon_used = radius;
        if out.holds {
            report.c2_holds = true;
            return report;
        }
        if attempt < 2 {
            radius /= 2.0;
        }
    }
    report.c2_holds = false;
    report
}

fn c1_only(meta: &MetaGame, center: &StrategyProfile, q: f64, epsilon: f64, samples: usize) -> VariationalReport {
    let (grad, _) = gradient_and_values(meta, center, q);
    let mut value = 0.0;
    let mut vertex = Vec::with_capacity(grad.len());
    for (g, w) in grad.iter().zip(center.weights()) {
        let (best, top) = g
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(b, t), (s, &x)| if x > t { (s, x) } else { (b, t) });
        let at: f64 = g.iter().zip(w).map(|(x, y)| x * y).sum();
        value += top - at;
        vertex.push(best);
    }
    VariationalReport {
        c1_holds: value <= GAIN_TOL,
        c1_value: value,
        c1_vertex: vertex,
        c2_holds: false,
        c2_max: f64::NAN,
        epsilon_used: epsilon,
        samples,
        excluded_in_class: 0,
    }
}

/// Random two-player, two-action game with perfect monitoring, rewards
/// uniform in [-1, 1], recall 0 or 1 and continuation probability in [0, 0.9].
pub fn random_small_spec<R: Rng + ?Sized>(rng: &mut R, max_recall: usize) -> RepeatedGameSpec {
    let rewards: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let stage = StageGame::from_counts(&[2, 2], rewards).expect("finite rewards");
    let monitoring = perfect_monitoring(&stage);
    let recall = rng.random_range(0..=max_recall);
    let delta = rng.random_range(0.0..0.9);
    RepeatedGameSpec::new(stage, monitoring, delta, vec![recall; 2]).expect("valid random spec")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValidationConfig {
    pub q_values: [f64; 2],
    pub epsilon: f64,
    pub samples: usize,
    pub max_recall: usize,
}

impl Default for CrossValidationConfig {
    fn default() -> Self {
        Self {
            q_values: [0.0, 1.0],
            epsilon: 0.02,
            samples: 1000,
            max_recall: 1,
        }
    }
}

/// A persistent disagreement between the strictness certificate and the
/// variational conditions.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub trial: usize,
    pub spec: RepeatedGameSpec,
    pub profile: Vec<usize>,
    pub q: f64,
    pub strict: EquilibriumReport,
    pub variational: VariationalReport,
}

#[derive(Debug, Clone, Default)]
pub struct CrossValidationSummary {
    pub trials: usize,
    pub checks: usize,
    pub strict_profiles: usize,
    /// Disagreements before the 10x-sample recheck.
    pub initial_disagreements: usize,
    pub confirmed: Vec<Counterexample>,
}

fn agree(meta: &MetaGame, profile: &StrategyProfile, strict: bool, q: f64, cfg: &CrossValidationConfig, seed: u64) -> (bool, VariationalReport) {
    let mut var = c1_only(meta, profile, q, cfg.epsilon, cfg.samples);
    if var.c1_holds {
        var = check_variational(meta, profile, q, cfg.epsilon, cfg.samples, seed);
    }
    (strict == (var.c1_holds && var.c2_holds), var)
}

/// Compares the strictness certificate with C'(i) ∧ C'(ii) on every pure
/// profile of `trials` random specs.
pub fn cross_validate_lemma(
    generator: &(dyn Fn(&mut SimRng) -> RepeatedGameSpec + Sync),
    trials: usize,
    cfg: &CrossValidationConfig,
    seed: u64,
) -> Result<CrossValidationSummary> {
    let per_trial: Vec<Result<CrossValidationSummary>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, stream::TRIALS, t as u64));
            let spec = generator(&mut rng);
            let meta = MetaGame::build(&spec, Default::default())?;
            let mut s = CrossValidationSummary {
                trials: 1,
                ..Default::default()
            };
            for p in 0..meta.profile_count() {
                let idx = meta.decode_profile(p);
                let profile = StrategyProfile::pure(meta.strategy_space(), &idx)?;
                let strict = check_strict(&meta, &profile);
                if strict.is_strict {
                    s.strict_profiles += 1;
                }
                for (k, &q) in cfg.q_values.iter().enumerate() {
                    s.checks += 1;
                    let check_seed = derive_seed(derive_seed(seed, stream::VARIATIONAL, t as u64), k as u64, p as u64);
                    let (ok, _) = agree(&meta, &profile, strict.is_strict, q, cfg, check_seed);
                    if ok {
                        continue;
                    }
                    s.initial_disagreements += 1;
                    let recheck = CrossValidationConfig {
                        samples: cfg.samples * 10,
                        ..*cfg
                    };
                    let (ok, variational) = agree(&meta, &profile, strict.is_strict, q, &recheck, check_seed ^ 0x5bd1);
                    if !ok {
                        s.confirmed.push(Counterexample {
                            trial: t,
                            spec: spec.clone(),
                            profile: idx.clone(),
                            q,
                            strict: strict.clone(),
                            variational,
                        });
                    }
                }
            }
            Ok(s)
        })
        .collect();
    let mut total = CrossValidationSummary::default();
    for s in per_trial {
        let s = s?;
        total.trials += s.trials;
        total.checks += s.checks;
        total.strict_profiles += s.strict_profiles;
        total.initial_disagreements += s.initial_disagreements;
        total.confirmed.extend(s.confirmed);
    }
    Ok(total)
}
