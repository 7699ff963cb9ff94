//! Stage games, monitoring structures and the repeated-game specification.
//!
//! Action profiles are addressed by a mixed-radix index with player 0 as the
//! most significant digit, so a 2x2 game enumerates `(0,0), (0,1), (1,0), (1,1)`.
//! Joint signal profiles use the same convention over the signal sets.

use crate::error::{Error, Result};

/// Simplex membership tolerance for distributions supplied by callers.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Kernel rows must sum to one within this tolerance after ingest.
pub const KERNEL_TOL: f64 = 1e-12;
/// Default cap on per-player recall length.
pub const DEFAULT_RECALL_CAP: usize = 6;

/// Mixed-radix strides for the given digit counts (first digit most significant).
pub(crate) fn strides(counts: &[usize]) -> Vec<usize> {
    let mut out = vec![1; counts.len()];
    for i in (0..counts.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * counts[i + 1];
    }
    out
}

/// Checks that `weights` lies on the probability simplex within [`SIMPLEX_TOL`].
pub(crate) fn check_distribution(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid(format!("{what}: empty distribution")));
    }
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < -SIMPLEX_TOL {
            return Err(Error::invalid(format!("{what}: entry {w} is not a probability")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("{what}: weights sum to {sum}, expected 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    action_names: Vec<Vec<String>>,
    action_counts: Vec<usize>,
    strides: Vec<usize>,
    /// `rewards[profile * n + player]`.
    rewards: Vec<f64>,
}

impl StageGame {
    /// Builds a stage game from per-player action names and one reward vector
    /// per action profile (profiles in mixed-radix order).
    pub fn new(action_names: Vec<Vec<String>>, rewards: Vec<Vec<f64>>) -> Result<Self> {
        if action_names.is_empty() {
            return Err(Error::invalid("a stage game needs at least one player"));
        }
        if let Some(i) = action_names.iter().position(|a| a.is_empty()) {
            return Err(Error::invalid(format!("player {i} has no actions")));
        }
        let action_counts: Vec<usize> = action_names.iter().map(Vec::len).collect();
        let n = action_counts.len();
        let profiles: usize = action_counts.iter().product();
        if rewards.len() != profiles {
            return Err(Error::invalid(format!(
                "expected {profiles} reward rows (one per action profile), got {}",
                rewards.len()
            )));
        }
        let mut flat = Vec::with_capacity(profiles * n);
        for (p, row) in rewards.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "reward row {p} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(r) = row.iter().find(|r| !r.is_finite()) {
                return Err(Error::invalid(format!("reward row {p} contains non-finite {r}")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            strides: strides(&action_counts),
            action_names,
            action_counts,
            rewards: flat,
        })
    }

    /// Game with actions named `a0, a1, ...`.
    pub fn from_counts(action_counts: &[usize], rewards: Vec<Vec<f64>>) -> Result<Self> {
        let names = action_counts
            .iter()
            .map(|&c| (0..c).map(|k| format!("a{k}")).collect())
            .collect();
        Self::new(names, rewards)
    }

    pub fn player_count(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn action_names(&self, player: usize) -> &[String] {
        &self.action_names[player]
    }

    pub fn profile_count(&self) -> usize {
        self.rewards.len() / self.player_count()
    }

    pub fn profile_index(&self, actions: &[usize]) -> usize {
        actions.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn action_of(&self, profile: usize, player: usize) -> usize {
        (profile / self.strides[player]) % self.action_counts[player]
    }

    pub fn decode_profile(&self, profile: usize) -> Vec<usize> {
        (0..self.player_count()).map(|i| self.action_of(profile, i)).collect()
    }

    pub fn reward(&self, profile: usize, player: usize) -> f64 {
        self.rewards[profile * self.player_count() + player]
    }

    pub fn rewards_of(&self, profile: usize) -> &[f64] {
        let n = self.player_count();
        &self.rewards[profile * n..(profile + 1) * n]
    }

    /// Human-readable profile label, e.g. `C/D`.
    pub fn profile_name(&self, profile: usize) -> String {
        (0..self.player_count())
            .map(|i| self.action_names[i][self.action_of(profile, i)].as_str())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Probability of `profile` under independent per-player distributions.
    pub(crate) fn profile_probability(&self, profile: usize, dists: &[Vec<f64>]) -> f64 {
        dists
            .iter()
            .enumerate()
            .map(|(i, d)| d[self.action_of(profile, i)])
            .product()
    }
}

/// Expected stage reward of every player when each player draws an action
/// independently from their distribution.
pub fn one_shot_utility(game: &StageGame, profile: &[Vec<f64>]) -> Result<Vec<f64>> {
    if profile.len() != game.player_count() {
        return Err(Error::invalid(format!(
            "profile has {} players, game has {}",
            profile.len(),
            game.player_count()
        )));
    }
    for (i, d) in profile.iter().enumerate() {
        if d.len() != game.action_counts()[i] {
            return Err(Error::invalid(format!(
                "player {i}: distribution has {} entries, player has {} actions",
                d.len(),
                game.action_counts()[i]
            )));
        }
        check_distribution(d, &format!("player {i} action distribution"))?;
    }
    let n = game.player_count();
    let mut out = vec![0.0; n];
    for p in 0..game.profile_count() {
        let w = game.profile_probability(p, profile);
        if w == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * game.reward(p, i);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringStructure {
    signal_names: Vec<Vec<String>>,
    signal_counts: Vec<usize>,
    signal_strides: Vec<usize>,
    /// `kernel[action_profile][joint_signal]`.
    kernel: Vec<Vec<f64>>,
    /// Positive-probability joint signals per action profile.
    support: Vec<Vec<(usize, f64)>>,
    is_perfect: bool,
    is_public: bool,
}

impl MonitoringStructure {
    /// Builds a monitoring structure from one kernel row per action profile.
    ///
    /// Rows within 1e-9 of a distribution are renormalized; anything further
    /// off is rejected.
    pub fn new(game: &StageGame, signal_names: Vec<Vec<String>>, kernel: Vec<Vec<f64>>) -> Result<Self> {
        if signal_names.len() != game.player_count() {
            return Err(Error::invalid(format!(
                "signal sets given for {} players, game has {}",
                signal_names.len(),
                game.player_count()
            )));
        }
        if let Some(i) = signal_names.iter().position(|s| s.is_empty()) {
            return Err(Error::invalid(format!("player {i} has an empty signal set")));
        }
        let signal_counts: Vec<usize> = signal_names.iter().map(Vec::len).collect();
        let joint: usize = signal_counts.iter().product();
        if kernel.len() != game.profile_count() {
            return Err(Error::invalid(format!(
                "kernel has {} rows, expected one per action profile ({})",
                kernel.len(),
                game.profile_count()
            )));
        }
        let mut rows = Vec::with_capacity(kernel.len());
        for (p, row) in kernel.into_iter().enumerate() {
            if row.len() != joint {
                return Err(Error::invalid(format!(
                    "kernel row {p} has {} entries, expected {joint} joint signals",
                    row.len()
                )));
            }
            check_distribution(&row, &format!("kernel row {p}"))?;
            let sum: f64 = row.iter().map(|x| x.max(0.0)).sum();
            let row: Vec<f64> = row.iter().map(|x| x.max(0.0) / sum).collect();
            let resum: f64 = row.iter().sum();
            if (resum - 1.0).abs() > KERNEL_TOL {
                return Err(Error::internal(format!("kernel row {p} renormalized to {resum}")));
            }
            rows.push(row);
        }
        let support: Vec<Vec<(usize, f64)>> = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(z, &x)| (z, x)).collect())
            .collect();
        let mut me = Self {
            signal_strides: strides(&signal_counts),
            signal_names,
            signal_counts,
            kernel: rows,
            support,
            is_perfect: false,
            is_public: false,
        };
        me.is_perfect = me.compute_is_perfect();
        me.is_public = me.compute_is_public();
        Ok(me)
    }

    fn compute_is_perfect(&self) -> bool {
        for i in 0..self.signal_counts.len() {
            let mut seen: Vec<Option<usize>> = vec![None; self.signal_counts[i]];
            for (a, row) in self.support.iter().enumerate() {
                for &(z, _) in row {
                    let zi = self.signal_of(z, i);
                    match seen[zi] {
                        None => seen[zi] = Some(a),
                        Some(b) if b != a => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }

    fn compute_is_public(&self) -> bool {
        let n = self.signal_counts.len();
        if self.signal_counts.iter().any(|&c| c != self.signal_counts[0]) {
            return false;
        }
        self.support.iter().flatten().all(|&(z, _)| {
            let z0 = self.signal_of(z, 0);
            (1..n).all(|i| self.signal_of(z, i) == z0)
        })
    }

    pub fn signal_counts(&self) -> &[usize] {
        &self.signal_counts
    }

    pub fn signal_names(&self, player: usize) -> &[String] {
        &self.signal_names[player]
    }

    pub fn joint_signal_count(&self) -> usize {
        self.kernel.first().map_or(0, Vec::len)
    }

    pub fn signal_of(&self, joint: usize, player: usize) -> usize {
        (joint / self.signal_strides[player]) % self.signal_counts[player]
    }

    pub fn joint_index(&self, signals: &[usize]) -> usize {
        signals.iter().zip(&self.signal_strides).map(|(z, s)| z * s).sum()
    }

    pub fn row(&self, profile: usize) -> &[f64] {
        &self.kernel[profile]
    }

    pub fn support(&self, profile: usize) -> &[(usize, f64)] {
        &self.support[profile]
    }

    pub fn is_perfect(&self) -> bool {
        self.is_perfect
    }

    pub fn is_public(&self) -> bool {
        self.is_public
    }
}

/// Every player observes the realized action profile.
pub fn perfect_monitoring(game: &StageGame) -> MonitoringStructure {
    let n = game.player_count();
    let profiles = game.profile_count();
    let names: Vec<String> = (0..profiles).map(|p| game.profile_name(p)).collect();
    let signal_names = vec![names; n];
    let counts = vec![profiles; n];
    let st = strides(&counts);
    let joint = profiles.pow(n as u32);
    let kernel = (0..profiles)
        .map(|a| {
            let mut row = vec![0.0; joint];
            row[st.iter().map(|s| a * s).sum::<usize>()] = 1.0;
            row
        })
        .collect();
    MonitoringStructure::new(game, signal_names, kernel).expect("perfect monitoring kernel is well formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedGameSpec {
    pub stage: StageGame,
    pub monitoring: MonitoringStructure,
    /// Per-period continuation probability.
    pub delta: f64,
    pub recall: Vec<usize>,
}

impl RepeatedGameSpec {
    pub fn new(stage: StageGame, monitoring: MonitoringStructure, delta: f64, recall: Vec<usize>) -> Result<Self> {
        Self::with_recall_cap(stage, monitoring, delta, recall, DEFAULT_RECALL_CAP)
    }

    pub fn with_recall_cap(
        stage: StageGame,
        monitoring: MonitoringStructure,
        delta: f64,
        recall: Vec<usize>,
        recall_cap: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        if recall.len() != stage.player_count() {
            return Err(Error::invalid(format!(
                "recall given for {} players, game has {}",
                recall.len(),
                stage.player_count()
            )));
        }
        if monitoring.signal_counts().len() != stage.player_count()
            || monitoring.joint_signal_count() == 0
            || (0..stage.profile_count()).any(|p| monitoring.row(p).len() != monitoring.joint_signal_count())
        {
            return Err(Error::invalid("monitoring structure does not match the stage game"));
        }
        if let Some(&l) = recall.iter().find(|&&l| l > recall_cap) {
            return Err(Error::Capacity {
                what: "recall length".into(),
                required: l.to_string(),
                cap: recall_cap,
            });
        }
        Ok(Self {
            stage,
            monitoring,
            delta,
            recall,
        })
    }

    /// Perfect monitoring with the same recall for every player.
    pub fn perfect(stage: StageGame, delta: f64, recall: usize) -> Result<Self> {
        let monitoring = perfect_monitoring(&stage);
        let n = stage.player_count();
        Self::new(stage, monitoring, delta, vec![recall; n])
    }

    pub fn player_count(&self) -> usize {
        self.stage.player_count()
    }
}

/// Two action profiles a player cannot tell apart from own action and signal
/// although they pay that player differently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeducibilityViolation {
    pub player: usize,
    pub profile_a: usize,
    pub profile_b: usize,
    pub own_action: usize,
    pub own_signal: usize,
}

/// Lists every case where a player's reward is not determined by their own
/// action and signal. Diagnostic only; an empty list means rewards are deducible.
pub fn validate_reward_deducibility(spec: &RepeatedGameSpec) -> Vec<DeducibilityViolation> {
    let game = &spec.stage;
    let mon = &spec.monitoring;
    let mut out = Vec::new();
    for i in 0..game.player_count() {
        for a in 0..game.profile_count() {
            for b in (a + 1)..game.profile_count() {
                let ai = game.action_of(a, i);
                if ai != game.action_of(b, i) || game.reward(a, i) == game.reward(b, i) {
                    continue;
                }
                let mut shared: Vec<usize> = mon
                    .support(a)
                    .iter()
                    .map(|&(z, _)| mon.signal_of(z, i))
                    .filter(|&zi| mon.support(b).iter().any(|&(z, _)| mon.signal_of(z, i) == zi))
                    .collect();
                shared.sort_unstable();
                shared.dedup();
                out.extend(shared.into_iter().map(|zi| DeducibilityViolation {
                    player: i,
                    profile_a: a,
                    profile_b: b,
                    own_action: ai,
                    own_signal: zi,
                }));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd() -> StageGame {
        StageGame::new(
            vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
            vec![vec![2.0, 2.0], vec![0.0, 3.0], vec![3.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn one_shot_utility_examples() {
        let g = pd();
        let d = vec![0.0, 1.0];
        assert_eq!(one_shot_utility(&g, &[d.clone(), d]).unwrap(), vec![1.0, 1.0]);
        let u = vec![0.5, 0.5];
        assert_eq!(one_shot_utility(&g, &[u.clone(), u]).unwrap(), vec![1.5, 1.5]);
        for p in 0..4 {
            let acts = g.decode_profile(p);
            let dists: Vec<Vec<f64>> = acts
                .iter()
                .map(|&a| {
                    let mut v = vec![0.0; 2];
                    v[a] = 1.0;
                    v
                })
                .collect();
            assert_eq!(one_shot_utility(&g, &dists).unwrap(), g.rewards_of(p));
        }
    }

    #[test]
    fn one_shot_utility_rejects_bad_profiles() {
        let g = pd();
        assert!(one_shot_utility(&g, &[vec![1.0, 0.0]]).is_err());
        assert!(one_shot_utility(&g, &[vec![1.0, 0.0, 0.0], vec![1.0, 0.0]]).is_err());
        assert!(one_shot_utility(&g, &[vec![0.7, 0.7], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn perfect_monitoring_shapes() {
        let m = perfect_monitoring(&pd());
        assert_eq!(m.signal_counts(), &[4, 4]);
        assert!(m.is_perfect() && m.is_public());
        for p in 0..4 {
            assert_eq!(m.support(p).len(), 1);
            let (z, prob) = m.support(p)[0];
            assert_eq!(prob, 1.0);
            assert_eq!(m.signal_of(z, 0), p);
            assert_eq!(m.signal_of(z, 1), p);
        }
        let g3 = StageGame::from_counts(&[2, 2, 2], vec![vec![0.0; 3]; 8]).unwrap();
        let m3 = perfect_monitoring(&g3);
        assert_eq!(m3.signal_counts(), &[8, 8, 8]);
        assert!(m3.is_perfect());
    }

    #[test]
    fn kernel_rows_are_renormalized_or_rejected() {
        let g = pd();
        let names = vec![vec!["x".to_string()], vec!["y".to_string()]];
        let ok = MonitoringStructure::new(&g, names.clone(), vec![vec![1.0 + 5e-10]; 4]).unwrap();
        assert!((ok.row(0)[0] - 1.0).abs() <= KERNEL_TOL);
        assert!(!ok.is_perfect());
        assert!(MonitoringStructure::new(&g, names, vec![vec![1.01]; 4]).is_err());
    }

    #[test]
    fn perfect_monitoring_is_deducible() {
        let spec = RepeatedGameSpec::perfect(pd(), 0.9, 1).unwrap();
        assert!(validate_reward_deducibility(&spec).is_empty());
    }

    #[test]
    fn spec_validation() {
        let g = pd();
        let m = perfect_monitoring(&g);
        assert!(RepeatedGameSpec::new(g.clone(), m.clone(), 1.0, vec![1, 1]).is_err());
        assert!(RepeatedGameSpec::new(g.clone(), m.clone(), 0.5, vec![1]).is_err());
        assert!(matches!(
            RepeatedGameSpec::new(g, m, 0.5, vec![1, 99]),
            Err(Error::Capacity { .. })
        ));
    }
}
