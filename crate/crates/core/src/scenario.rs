//! Built-in games and named reference profiles.

use crate::behavioural::{BehaviouralGame, BehaviouralProfile};
use crate::error::{Error, Result};
use crate::game::{perfect_monitoring, MonitoringStructure, RepeatedGameSpec, StageGame};
use crate::strategy::{StrategyProfile, StrategySpace};

pub const DEFAULT_DELTA: f64 = 0.9;
pub const DEFAULT_RECALL: usize = 1;

const C: usize = 0;
const D: usize = 1;

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Prisoner's dilemma with payoffs 2,2 / 0,3 / 3,0 / 1,1.
pub fn pd_stage() -> StageGame {
    StageGame::new(
        vec![names(&["C", "D"]), names(&["C", "D"])],
        vec![vec![2.0, 2.0], vec![0.0, 3.0], vec![3.0, 0.0], vec![1.0, 1.0]],
    )
    .expect("static game")
}

pub fn matching_pennies_stage() -> StageGame {
    StageGame::new(
        vec![names(&["H", "T"]), names(&["H", "T"])],
        vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0]],
    )
    .expect("static game")
}

/// Prisoner's dilemma variant with payoffs 4,4 / 0,5 / 5,0 / 2,2 whose
/// signals about the opponent can be wrong after mutual cooperation.
pub fn noisy_pd_monitoring(game: &StageGame, e1: f64, e2: f64, e3: f64) -> Result<MonitoringStructure> {
    for e in [e1, e2, e3] {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::invalid(format!("noise parameters must lie in [0, 1), got {e}")));
        }
    }
    if e1 + e2 + e3 >= 1.0 {
        return Err(Error::invalid("noise parameters must sum to less than 1"));
    }
    // Player 1 observes c2/d2, player 2 observes c1/d1; joint index = z1 * 2 + z2.
    let accurate = |opp_of_1: usize, opp_of_2: usize| {
        let mut row = vec![0.0; 4];
        row[opp_of_1 * 2 + opp_of_2] = 1.0;
        row
    };
    let kernel = vec![
        vec![1.0 - e1 - e2 - e3, e2, e1, e3],
        accurate(D, C),
        accurate(C, D),
        accurate(D, D),
    ];
    MonitoringStructure::new(game, vec![names(&["c2", "d2"]), names(&["c1", "d1"])], kernel)
}

pub fn noisy_pd_stage() -> StageGame {
    StageGame::new(
        vec![names(&["C", "D"]), names(&["C", "D"])],
        vec![vec![4.0, 4.0], vec![0.0, 5.0], vec![5.0, 0.0], vec![2.0, 2.0]],
    )
    .expect("static game")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    PdStandard,
    PdVariantNoisy(f64, f64, f64),
    MatchingPennies,
}

impl Scenario {
    /// Parses `pd_standard`, `matching_pennies` or `pd_variant_noisy(e1,e2,e3)`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "pd_standard" => return Ok(Scenario::PdStandard),
            "matching_pennies" => return Ok(Scenario::MatchingPennies),
            "pd_variant_noisy" => return Ok(Scenario::PdVariantNoisy(0.0, 0.0, 0.0)),
            _ => {}
        }
        if let Some(args) = name.strip_prefix("pd_variant_noisy(").and_then(|r| r.strip_suffix(')')) {
            let eps: Vec<f64> = args
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad noise parameter {s:?}"))))
                .collect::<Result<_>>()?;
            if eps.len() != 3 {
                return Err(Error::invalid("pd_variant_noisy takes three noise parameters"));
            }
            return Ok(Scenario::PdVariantNoisy(eps[0], eps[1], eps[2]));
        }
        if name == "custom" {
            return Err(Error::invalid("scenario custom requires a game file"));
        }
        Err(Error::invalid(format!("unknown scenario {name:?}")))
    }

    pub fn spec(&self, delta: f64, recall: usize) -> Result<RepeatedGameSpec> {
        match *self {
            Scenario::PdStandard => RepeatedGameSpec::perfect(pd_stage(), delta, recall),
            Scenario::MatchingPennies => RepeatedGameSpec::perfect(matching_pennies_stage(), delta, recall),
            Scenario::PdVariantNoisy(e1, e2, e3) => {
                let stage = noisy_pd_stage();
                let monitoring = noisy_pd_monitoring(&stage, e1, e2, e3)?;
                RepeatedGameSpec::new(stage, monitoring, delta, vec![recall; 2])
            }
        }
    }
}

/// Loads a built-in scenario with the given continuation probability and recall.
pub fn load_scenario(name: &str, delta: f64, recall: usize) -> Result<RepeatedGameSpec> {
    Scenario::parse(name)?.spec(delta, recall)
}

/// What a player's signal reports about the opponent's action in a
/// two-player game, if it determines it.
fn opponent_reading(spec: &RepeatedGameSpec, player: usize) -> Result<Vec<Option<usize>>> {
    if spec.player_count() != 2 {
        return Err(Error::invalid("named reference profiles are defined for two-player games"));
    }
    let mon = &spec.monitoring;
    let opp = 1 - player;
    let mut reading: Vec<Option<Option<usize>>> = vec![None; mon.signal_counts()[player]];
    if mon.is_perfect() {
        for p in 0..spec.stage.profile_count() {
            for &(z, _) in mon.support(p) {
                reading[mon.signal_of(z, player)] = Some(Some(spec.stage.action_of(p, opp)));
            }
        }
    } else {
        // Signals named after the opponent's actions ("c2" reads as C).
        let actions = spec.stage.action_names(opp);
        for (z, name) in mon.signal_names(player).iter().enumerate() {
            let head = name.chars().next().map(|c| c.to_ascii_uppercase().to_string());
            let hit = actions.iter().position(|a| Some(a.to_ascii_uppercase()) == head);
            reading[z] = Some(hit);
        }
    }
    Ok(reading.into_iter().map(|r| r.flatten()).collect())
}

fn action_named(spec: &RepeatedGameSpec, player: usize, name: &str) -> Result<usize> {
    spec.stage
        .action_names(player)
        .iter()
        .position(|a| a == name)
        .ok_or_else(|| Error::invalid(format!("player {player} has no action named {name:?}")))
}

/// Names accepted by [`named_profile`].
pub const NAMED_PROFILES: &[&str] = &["alld", "allc", "grim", "d-then-tft", "a22"];

/// Action rule of a named reference strategy given the most recent
/// (own action, opponent action read from the signal) pair.
fn rule(name: &str, last: Option<(usize, Option<usize>)>) -> Result<usize> {
    Ok(match name {
        "alld" => D,
        "allc" => C,
        "grim" => match last {
            None | Some((C, Some(C))) => C,
            _ => D,
        },
        "d-then-tft" => match last {
            None => D,
            Some((_, Some(o))) => o,
            Some((_, None)) => D,
        },
        "a22" => match last {
            None => C,
            Some((a, Some(o))) if a == o => C,
            _ => D,
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown named profile {other:?}; expected one of {}",
                NAMED_PROFILES.join(", ")
            )))
        }
    })
}

/// Index of a named reference strategy for one player of a C/D game.
pub fn named_strategy(spec: &RepeatedGameSpec, space: &StrategySpace, player: usize, name: &str) -> Result<usize> {
    if action_named(spec, player, "C")? != C || action_named(spec, player, "D")? != D {
        return Err(Error::invalid("named reference profiles need actions C and D in that order"));
    }
    let reading = opponent_reading(spec, player)?;
    rule(name, None)?;
    let mut failure = None;
    let idx = space.index_from_rule(player, |h| {
        let last = h.last().map(|&(a, z)| (a, reading[z]));
        rule(name, last).unwrap_or_else(|e| {
            failure = Some(e);
            0
        })
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(idx),
    }
}

/// Named pure profile; `name` is one strategy for everyone or
/// `first,second` for per-player strategies.
pub fn named_profile(spec: &RepeatedGameSpec, space: &StrategySpace, name: &str) -> Result<StrategyProfile> {
    let parts: Vec<&str> = name.split(',').map(str::trim).collect();
    let n = spec.player_count();
    if parts.len() != 1 && parts.len() != n {
        return Err(Error::invalid(format!("named profile {name:?} must list 1 or {n} strategies")));
    }
    let indices: Vec<usize> = (0..n)
        .map(|i| named_strategy(spec, space, i, parts[if parts.len() == 1 { 0 } else { i }]))
        .collect::<Result<_>>()?;
    StrategyProfile::pure(space, &indices)
}

/// Behavioural grim trigger: cooperate after the empty history or mutual
/// cooperation, defect otherwise.
pub fn behavioural_grim(game: &BehaviouralGame) -> BehaviouralProfile {
    let coop = game.spec().stage.profile_index(&[C, C]);
    game.pure_profile(|_, h| match h.last() {
        None => C,
        Some(&p) if p == coop => C,
        _ => D,
    })
}

/// Profile on one-shot PD: perfect monitoring with zero recall and no continuation.
pub fn one_shot_pd() -> RepeatedGameSpec {
    let stage = pd_stage();
    let monitoring = perfect_monitoring(&stage);
    RepeatedGameSpec::new(stage, monitoring, 0.0, vec![0, 0]).expect("static spec")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::validate_reward_deducibility;
    use crate::strategy::EnumerationOptions;

    #[test]
    fn pd_table() {
        let g = pd_stage();
        assert_eq!(g.rewards_of(g.profile_index(&[0, 0])), &[2.0, 2.0]);
        assert_eq!(g.rewards_of(g.profile_index(&[0, 1])), &[0.0, 3.0]);
        assert_eq!(g.rewards_of(g.profile_index(&[1, 0])), &[3.0, 0.0]);
        assert_eq!(g.rewards_of(g.profile_index(&[1, 1])), &[1.0, 1.0]);
    }

    #[test]
    fn noisy_kernel_row() {
        let spec = load_scenario("pd_variant_noisy(0.01,0.01,0.01)", 0.9, 1).unwrap();
        let row = spec.monitoring.row(0);
        // (c2,c1), (c2,d1), (d2,c1), (d2,d1)
        let expect = [0.97, 0.01, 0.01, 0.01];
        for (a, b) in row.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // (d2, c1) carries ε1.
        let spec = load_scenario("pd_variant_noisy(0.02,0.03,0.04)", 0.9, 1).unwrap();
        assert!((spec.monitoring.row(0)[2] - 0.02).abs() < 1e-12);
        assert!((spec.monitoring.row(0)[1] - 0.03).abs() < 1e-12);
        assert!(validate_reward_deducibility(&load_scenario("pd_variant_noisy(0,0,0)", 0.9, 1).unwrap()).is_empty());
    }

    #[test]
    fn scenario_errors() {
        assert!(load_scenario("nope", 0.9, 1).is_err());
        assert!(load_scenario("pd_variant_noisy(0.5,0.5,0.1)", 0.9, 1).is_err());
        assert!(load_scenario("pd_variant_noisy(-0.1,0,0)", 0.9, 1).is_err());
    }

    #[test]
    fn named_profiles_resolve() {
        let spec = load_scenario("pd_standard", 0.9, 1).unwrap();
        let space = StrategySpace::new(&spec, EnumerationOptions::default()).unwrap();
        for name in NAMED_PROFILES {
            named_profile(&spec, &space, name).unwrap();
        }
        let alld = named_strategy(&spec, &space, 0, "alld").unwrap();
        assert_eq!(space.table(0, alld), vec![1; 5]);
        assert!(named_profile(&spec, &space, "tft2").is_err());
    }
}
