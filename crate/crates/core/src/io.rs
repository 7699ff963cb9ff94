//! Game, profile and behavioural-profile files (TOML), CSV outputs and the
//! meta-game text dump.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::behavioural::{BehaviouralGame, BehaviouralProfile};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::estimator::NoiseDiagnostics;
use crate::folk::BasinResult;
use crate::game::{MonitoringStructure, RepeatedGameSpec, StageGame};
use crate::scenario::{named_profile, DEFAULT_DELTA, DEFAULT_RECALL};
use crate::strategy::{StrategyProfile, StrategySpace};
use crate::valuation::{Episode, MetaGame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecallField {
    Common(usize),
    PerPlayer(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringFile {
    pub signals: Vec<Vec<String>>,
    /// One row per action profile over joint signal profiles.
    pub kernel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub players: usize,
    pub actions: Vec<Vec<String>>,
    /// One row per action profile (row-major, player 0 slowest), one entry per player.
    pub rewards: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<RecallField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitoring: Option<MonitoringFile>,
}

impl GameFile {
    /// Builds the spec; `delta`/`recall` override the file's values when given.
    pub fn to_spec(&self, delta: Option<f64>, recall: Option<usize>) -> Result<RepeatedGameSpec> {
        if self.players != self.actions.len() {
            return Err(Error::invalid(format!(
                "players = {} but {} action lists given",
                self.players,
                self.actions.len()
            )));
        }
        let stage = StageGame::new(self.actions.clone(), self.rewards.clone())?;
        let monitoring = match &self.monitoring {
            Some(m) => MonitoringStructure::new(&stage, m.signals.clone(), m.kernel.clone())?,
            None => crate::game::perfect_monitoring(&stage),
        };
        let delta = delta.or(self.delta).unwrap_or(DEFAULT_DELTA);
        let recall = match (recall, &self.recall) {
            (Some(l), _) => vec![l; self.players],
            (None, Some(RecallField::Common(l))) => vec![*l; self.players],
            (None, Some(RecallField::PerPlayer(v))) => v.clone(),
            (None, None) => vec![DEFAULT_RECALL; self.players],
        };
        RepeatedGameSpec::new(stage, monitoring, delta, recall)
    }

    pub fn from_spec(spec: &RepeatedGameSpec) -> Self {
        let stage = &spec.stage;
        let n = stage.player_count();
        let monitoring = if spec.monitoring.is_perfect() && spec.monitoring == crate::game::perfect_monitoring(stage) {
            None
        } else {
            Some(MonitoringFile {
                signals: (0..n).map(|i| spec.monitoring.signal_names(i).to_vec()).collect(),
                kernel: (0..stage.profile_count()).map(|p| spec.monitoring.row(p).to_vec()).collect(),
            })
        };
        GameFile {
            name: None,
            players: n,
            actions: (0..n).map(|i| stage.action_names(i).to_vec()).collect(),
            rewards: (0..stage.profile_count()).map(|p| stage.rewards_of(p).to_vec()).collect(),
            delta: Some(spec.delta),
            recall: Some(RecallField::PerPlayer(spec.recall.clone())),
            monitoring,
        }
    }
}

pub fn parse_game(text: &str) -> Result<GameFile> {
    Ok(toml::from_str(text)?)
}

pub fn read_game(path: &std::path::Path) -> Result<GameFile> {
    parse_game(&std::fs::read_to_string(path)?)
}

/// TOML serialization of a spec, readable by [`parse_game`].
pub fn spec_to_toml(spec: &RepeatedGameSpec) -> String {
    toml::to_string(&GameFile::from_spec(spec)).expect("game files serialize")
}

/// Label of a private history: `action:signal` pairs, oldest first, separated by spaces.
pub fn history_label(spec: &RepeatedGameSpec, space: &StrategySpace, player: usize, h: usize) -> String {
    space
        .histories(player)
        .decode(h)
        .iter()
        .map(|&(a, z)| {
            format!(
                "{}:{}",
                spec.stage.action_names(player)[a],
                spec.monitoring.signal_names(player)[z]
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Label of a public history: profile names separated by spaces.
pub fn public_history_label(game: &BehaviouralGame, h: usize) -> String {
    game.histories()
        .decode(h)
        .iter()
        .map(|&p| game.spec().stage.profile_name(p))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerEntry {
    /// Mixed weights over the enumerated pure strategies.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Pure strategy given as history label → action name.
    #[serde(default)]
    pub table: Option<BTreeMap<String, String>>,
    /// Action for histories missing from `table`.
    #[serde(default)]
    pub default: Option<String>,
    /// A named reference strategy.
    #[serde(default)]
    pub named: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub player: Vec<PlayerEntry>,
}

fn entry_weights(spec: &RepeatedGameSpec, space: &StrategySpace, i: usize, entry: &PlayerEntry) -> Result<Vec<f64>> {
    let given = [entry.weights.is_some(), entry.table.is_some() || entry.default.is_some(), entry.named.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(Error::invalid(format!(
            "player {i}: give exactly one of weights, table/default, or named"
        )));
    }
    if let Some(w) = &entry.weights {
        return Ok(w.clone());
    }
    let index = if let Some(name) = &entry.named {
        crate::scenario::named_strategy(spec, space, i, name)?
    } else {
        let table = entry.table.clone().unwrap_or_default();
        let names = spec.stage.action_names(i);
        let lookup = |name: &str| {
            names
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::invalid(format!("player {i} has no action {name:?}")))
        };
        let labels: Vec<String> = (0..space.history_count(i)).map(|h| history_label(spec, space, i, h)).collect();
        if let Some(unknown) = table.keys().find(|k| !labels.contains(k)) {
            return Err(Error::invalid(format!("player {i}: unknown history {unknown:?}")));
        }
        let actions: Vec<usize> = labels
            .iter()
            .map(|label| match table.get(label).or(entry.default.as_ref()) {
                Some(a) => lookup(a),
                None => Err(Error::invalid(format!("player {i}: no action for history {label:?}"))),
            })
            .collect::<Result<_>>()?;
        space.index_of(i, &actions)?
    };
    let mut w = vec![0.0; space.strategy_counts()[i]];
    w[index] = 1.0;
    Ok(w)
}

pub fn parse_profile(spec: &RepeatedGameSpec, space: &StrategySpace, text: &str) -> Result<StrategyProfile> {
    let file: ProfileFile = toml::from_str(text)?;
    if file.player.len() != spec.player_count() {
        return Err(Error::invalid(format!(
            "profile lists {} players, game has {}",
            file.player.len(),
            spec.player_count()
        )));
    }
    let weights = file
        .player
        .iter()
        .enumerate()
        .map(|(i, e)| entry_weights(spec, space, i, e))
        .collect::<Result<Vec<_>>>()?;
    StrategyProfile::new(space, weights)
}

/// Reads a profile file, or resolves a named reference profile when `source`
/// is not an existing path.
pub fn load_profile(spec: &RepeatedGameSpec, space: &StrategySpace, source: &str) -> Result<StrategyProfile> {
    let path = std::path::Path::new(source);
    if path.is_file() {
        parse_profile(spec, space, &std::fs::read_to_string(path)?)
    } else {
        named_profile(spec, space, source)
    }
}

/// Profile file text with explicit weights.
pub fn profile_to_toml(profile: &StrategyProfile) -> String {
    let file = ProfileFile {
        player: profile
            .weights()
            .iter()
            .map(|w| PlayerEntry {
                weights: Some(w.clone()),
                table: None,
                default: None,
                named: None,
            })
            .collect(),
    };
    toml::to_string(&file).expect("profiles serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviouralEntry {
    #[serde(default)]
    pub table: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub default: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviouralFile {
    pub player: Vec<BehaviouralEntry>,
}

pub fn parse_behavioural(game: &BehaviouralGame, text: &str) -> Result<BehaviouralProfile> {
    let file: BehaviouralFile = toml::from_str(text)?;
    let labels: Vec<String> = (0..game.history_count()).map(|h| public_history_label(game, h)).collect();
    let conditionals = file
        .player
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if let Some(unknown) = e.table.keys().find(|k| !labels.contains(k)) {
                return Err(Error::invalid(format!("player {i}: unknown public history {unknown:?}")));
            }
            labels
                .iter()
                .map(|l| {
                    e.table
                        .get(l)
                        .or(e.default.as_ref())
                        .cloned()
                        .ok_or_else(|| Error::invalid(format!("player {i}: no distribution for history {l:?}")))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    game.profile(conditionals)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `n,player,component,weight` for every recorded iterate.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "player", "component", "weight"])?;
    for (n, p) in &traj.profiles {
        for (i, weights) in p.weights().iter().enumerate() {
            for (k, x) in weights.iter().enumerate() {
                w.write_record([n.to_string(), i.to_string(), k.to_string(), x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `n,gradient_norm,distance_to_target,value_0,...`.
pub fn write_summary_csv<W: Write>(out: W, traj: &Trajectory, players: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "gradient_norm".into(), "distance_to_target".into()];
    header.extend((0..players).map(|i| format!("value_{i}")));
    w.write_record(&header)?;
    for r in &traj.records {
        let mut row = vec![r.n.to_string(), r.gradient_norm.to_string(), fmt_opt(r.distance)];
        row.extend((0..players).map(|i| r.values.get(i).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `seed,converged,final_distance,episodes_used`.
pub fn write_basin_csv<W: Write>(out: W, result: &BasinResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "converged", "final_distance", "episodes_used"])?;
    for r in &result.runs {
        w.write_record([
            r.seed.to_string(),
            r.converged.to_string(),
            r.final_distance.to_string(),
            r.episodes_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Diagnostics table, preceded by a comment line naming the estimator.
pub fn write_diagnostics_csv<W: Write>(mut out: W, d: &NoiseDiagnostics) -> Result<()> {
    writeln!(out, "# estimator={} samples={}", d.estimator, d.samples)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "bias_norm",
        "variance",
        "estimator_bias_norm",
        "exploration_bias_norm",
        "max_z",
        "ell_sigma",
        "ell_b",
    ])?;
    for s in &d.steps {
        w.write_record([
            s.n.to_string(),
            s.bias_norm.to_string(),
            s.second_moment.to_string(),
            fmt_opt(s.estimator_bias_norm),
            fmt_opt(s.exploration_bias_norm),
            s.max_z.to_string(),
            d.ell_sigma.to_string(),
            d.ell_b.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `period,action_i...,signal_i...,reward_i...` with names.
pub fn write_episode_csv<W: Write>(out: W, spec: &RepeatedGameSpec, ep: &Episode) -> Result<()> {
    let n = spec.player_count();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["period".to_string()];
    header.extend((0..n).map(|i| format!("action_{i}")));
    header.extend((0..n).map(|i| format!("signal_{i}")));
    header.extend((0..n).map(|i| format!("reward_{i}")));
    w.write_record(&header)?;
    for t in 0..ep.len() {
        let mut row = vec![(t + 1).to_string()];
        row.extend((0..n).map(|i| spec.stage.action_names(i)[spec.stage.action_of(ep.actions[t], i)].clone()));
        row.extend((0..n).map(|i| spec.monitoring.signal_names(i)[spec.monitoring.signal_of(ep.signals[t], i)].clone()));
        row.extend(ep.rewards[t].iter().map(|r| r.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text dump: strategy tables per player, then one payoff line per pure profile.
pub fn meta_game_dump(meta: &MetaGame) -> String {
    let spec = meta.spec();
    let space = meta.strategy_space();
    let n = meta.player_count();
    let mut s = String::new();
    let _ = writeln!(s, "players {n}");
    let _ = writeln!(s, "delta {}", spec.delta);
    let _ = writeln!(s, "exploration {}", meta.exploration());
    for i in 0..n {
        let labels: Vec<String> = (0..space.history_count(i))
            .map(|h| format!("[{}]", history_label(spec, space, i, h)))
            .collect();
        let _ = writeln!(s, "player {i} recall {} histories {}", spec.recall[i], labels.join(" "));
        let _ = writeln!(s, "player {i} strategies {}", space.strategy_counts()[i]);
        for e in 0..space.strategy_counts()[i] {
            let acts: Vec<&str> = space
                .table(i, e)
                .iter()
                .map(|&a| spec.stage.action_names(i)[a].as_str())
                .collect();
            let _ = writeln!(s, "strategy {i} {e} {}", acts.join(" "));
        }
    }
    let _ = writeln!(s, "payoffs");
    for p in 0..meta.profile_count() {
        let idx: Vec<String> = meta.decode_profile(p).iter().map(|x| x.to_string()).collect();
        let vals: Vec<String> = (0..n).map(|i| meta.payoff(i, p).to_string()).collect();
        let _ = writeln!(s, "{} : {}", idx.join(" "), vals.join(" "));
    }
    s
}
