//! Command-line experiment runner.
//!
//! Every subcommand shares one flag set; a TOML file given with `--config`
//! supplies the same keys, and flags given on the command line win over it.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_exact, QReplicatorConfig, Trajectory};
use crate::equilibrium::{check_strict, check_variational};
use crate::error::{Error, Result};
use crate::estimator::{diagnose_noise, run_stochastic, EpsilonGreedyConfig, EstimatorVariant, ExactGradient, Reinforce};
use crate::folk::{basin_experiment, feasible_ir_set, BasinConfig, BasinDynamics, IrVariant};
use crate::game::RepeatedGameSpec;
use crate::io;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::scenario::{load_scenario, DEFAULT_DELTA, DEFAULT_RECALL};
use crate::strategy::StrategyProfile;
use crate::valuation::{MetaGame, MetaGameOptions};

/// Version string: package version plus `git describe` output when the build had one.
pub const VERSION: &str = env!("QREP_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qrep", version = VERSION, about = "Finite-recall repeated games and q-replicator learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    CheckEq,
    FolkSet,
    Basin,
    MetaGame,
    Diagnose,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the exact or ε-greedy q-replicator process and write its trajectory.
    Simulate(Options),
    /// Certify a profile; exit 0 strict, 1 equilibrium but not strict, 2 not an equilibrium.
    CheckEq(Options),
    /// Payoff hull, minmax values and membership of query points.
    FolkSet(Options),
    /// Basin-of-attraction experiment around a target profile.
    Basin(Options),
    /// Dump the enumerated strategies and meta-game payoffs.
    MetaGame(Options),
    /// Estimator noise and bias along a stochastic trajectory.
    Diagnose(Options),
}

impl Command {
    fn split(self) -> (Mode, Options) {
        match self {
            Command::Simulate(o) => (Mode::Simulate, o),
            Command::CheckEq(o) => (Mode::CheckEq, o),
            Command::FolkSet(o) => (Mode::FolkSet, o),
            Command::Basin(o) => (Mode::Basin, o),
            Command::MetaGame(o) => (Mode::MetaGame, o),
            Command::Diagnose(o) => (Mode::Diagnose, o),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// TOML file with any of these options (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// pd_standard, pd_variant_noisy(e1,e2,e3) or matching_pennies.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Game file (TOML); replaces --scenario.
    #[arg(long)]
    pub game: Option<PathBuf>,
    /// Profile file, or a named profile such as grim or alld,d-then-tft.
    #[arg(long)]
    pub profile: Option<String>,
    /// Target profile for distances and basins (file or name).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Base step size, one value or one per player.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    /// Exploration probability of the ε-greedy process.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub recall: Option<usize>,
    /// Steps of the process (one episode per step when stochastic).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Number of runs in a basin experiment.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub estimator: Option<EstimatorVariant>,
    /// Use the exact q-gradient instead of REINFORCE estimates.
    #[arg(long)]
    pub exact: bool,
    /// Class distance counted as convergence in basin runs.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Samples per step (diagnose) or neighbourhood samples (check-eq).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Record every this many steps.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Stop early once the stopping rule falls below this.
    #[arg(long)]
    pub stop_tolerance: Option<f64>,
    /// Payoff vector to test in folk-set, comma separated; repeatable.
    #[arg(long = "point")]
    pub points: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! prefer {
    ($a:ident, $b:ident; $($f:ident),*) => {
        Options {
            config: $a.config,
            exact: $a.exact || $b.exact,
            points: if $a.points.is_empty() { $b.points } else { $a.points },
            $($f: $a.$f.or($b.$f),)*
        }
    };
}

impl Options {
    /// Fills unset fields from `file`.
    pub fn over(self, file: Options) -> Options {
        prefer!(self, file; scenario, game, profile, target, q, gamma, p, m, epsilon, delta, recall,
            episodes, seeds, seed, radius, out, estimator, threshold, samples, stride, stop_tolerance, threads)
    }

    /// Reads `--config` if given and merges it under the flags.
    pub fn resolve(self) -> Result<Options> {
        match &self.config {
            Some(path) => {
                let file: Options = toml::from_str(&std::fs::read_to_string(path)?)?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn spec(&self) -> Result<RepeatedGameSpec> {
        match (&self.game, &self.scenario) {
            (Some(_), Some(_)) => Err(Error::invalid("give either --game or --scenario, not both")),
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(Error::invalid(format!("game file {} not found", path.display())));
                }
                io::read_game(path)?.to_spec(self.delta, self.recall)
            }
            (None, s) => load_scenario(
                s.as_deref().unwrap_or("pd_standard"),
                self.delta.unwrap_or(DEFAULT_DELTA),
                self.recall.unwrap_or(DEFAULT_RECALL),
            ),
        }
    }

    fn dynamics(&self, default_steps: usize) -> QReplicatorConfig {
        let d = QReplicatorConfig::default();
        QReplicatorConfig {
            q: self.q.unwrap_or(d.q),
            gammas: self.gamma.clone().unwrap_or(d.gammas),
            p: self.p.unwrap_or(d.p),
            m: self.m.unwrap_or(d.m),
            max_steps: self.episodes.unwrap_or(default_steps),
            stop_tolerance: self.stop_tolerance.unwrap_or(0.0),
            record_stride: self.stride.unwrap_or(1).max(1),
            check_stride: 1,
        }
    }

    fn stochastic(&self, default_steps: usize) -> EpsilonGreedyConfig {
        EpsilonGreedyConfig {
            epsilon: self.epsilon.unwrap_or(0.05),
            dynamics: self.dynamics(default_steps),
            variant: self.estimator.unwrap_or(EstimatorVariant::PureScore),
        }
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) => EXIT_VALIDATION,
        Error::Capacity { .. } => EXIT_CAPACITY,
        Error::Internal(_) | Error::Io(_) => EXIT_INTERNAL,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    mode: Mode,
    version: &'a str,
    master_seed: u64,
    /// `derive_seed(master, stream, 0)` per stream; run k uses index k.
    derived_seeds: Vec<(&'static str, u64)>,
    config: &'a Options,
    files: Vec<String>,
    timestamp_unix: u64,
}

fn write_manifest(dir: &Path, mode: Mode, opts: &Options, files: &[&str]) -> Result<()> {
    let master = opts.master_seed();
    let streams = [
        ("start", stream::START),
        ("dynamics", stream::DYNAMICS),
        ("diagnose", stream::DIAGNOSE),
        ("variational", stream::VARIATIONAL),
    ];
    let manifest = Manifest {
        mode,
        version: VERSION,
        master_seed: master,
        derived_seeds: streams.iter().map(|&(n, s)| (n, derive_seed(master, s, 0))).collect(),
        config: opts,
        files: files.iter().map(|f| f.to_string()).collect(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let (mode, opts) = cli.command.split();
    match opts.resolve().and_then(|o| run(mode, o)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qrep: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one mode with resolved options, on a dedicated pool when `threads` is set.
pub fn run(mode: Mode, opts: Options) -> Result<i32> {
    match opts.threads {
        Some(0) => Err(Error::invalid("--threads must be positive")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::internal(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(mode, &opts))
        }
        None => dispatch(mode, &opts),
    }
}

fn dispatch(mode: Mode, opts: &Options) -> Result<i32> {
    let spec = opts.spec()?;
    match mode {
        Mode::Simulate => simulate(&spec, opts),
        Mode::CheckEq => check_eq(&spec, opts),
        Mode::FolkSet => folk_set(&spec, opts),
        Mode::Basin => basin(&spec, opts),
        Mode::MetaGame => meta_game(&spec, opts),
        Mode::Diagnose => diagnose(&spec, opts),
    }
}

fn build_meta(spec: &RepeatedGameSpec, exploration: f64) -> Result<MetaGame> {
    MetaGame::build(
        spec,
        MetaGameOptions {
            exploration,
            ..Default::default()
        },
    )
}

fn start_profile(meta: &MetaGame, opts: &Options) -> Result<StrategyProfile> {
    match &opts.profile {
        Some(src) => io::load_profile(meta.spec(), meta.strategy_space(), src),
        None => {
            let mut rng = rng_from_seed(derive_seed(opts.master_seed(), stream::START, 0));
            Ok(StrategyProfile::random_interior(meta.strategy_space(), &mut rng))
        }
    }
}

fn target_profile(meta: &MetaGame, opts: &Options) -> Result<Option<StrategyProfile>> {
    opts.target
        .as_deref()
        .map(|t| io::load_profile(meta.spec(), meta.strategy_space(), t))
        .transpose()
}

fn run_process(meta: &MetaGame, start: &StrategyProfile, target: Option<&StrategyProfile>, opts: &Options) -> Result<Trajectory> {
    if opts.exact {
        run_exact(meta, start, &opts.dynamics(10_000), target)
    } else {
        let seed = derive_seed(opts.master_seed(), stream::DYNAMICS, 0);
        run_stochastic(meta, start, &opts.stochastic(20_000), seed, target)
    }
}

fn simulate(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let meta = build_meta(spec, 0.0)?;
    let start = start_profile(&meta, opts)?;
    let target = target_profile(&meta, opts)?;
    let traj = run_process(&meta, &start, target.as_ref(), opts)?;
    let dir = opts.out_dir("out");
    std::fs::create_dir_all(&dir)?;
    io::write_trajectory_csv(create(&dir, "trajectory.csv")?, &traj)?;
    io::write_summary_csv(create(&dir, "summary.csv")?, &traj, meta.player_count())?;
    std::fs::write(dir.join("final_profile.toml"), io::profile_to_toml(traj.final_profile()))?;
    write_manifest(&dir, Mode::Simulate, opts, &["trajectory.csv", "summary.csv", "final_profile.toml"])?;
    println!("steps {} stop {:?}", traj.steps, traj.stop);
    if let Some(d) = traj.final_distance() {
        println!("final class distance {d}");
    }
    Ok(EXIT_OK)
}

fn check_eq(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let meta = build_meta(spec, 0.0)?;
    let src = opts
        .profile
        .as_deref()
        .ok_or_else(|| Error::invalid("check-eq needs --profile"))?;
    let profile = io::load_profile(spec, meta.strategy_space(), src)?;
    let report = check_strict(&meta, &profile);
    let mut text = String::new();
    let verdict = if report.is_strict {
        "strict"
    } else if report.is_equilibrium {
        "equilibrium-not-strict"
    } else {
        "not-equilibrium"
    };
    text += &format!("verdict {verdict}\n");
    text += &format!("values {}\n", join(&report.values));
    let w = &report.worst_deviation;
    text += &format!("worst_deviation player {} strategy {} gain {}\n", w.player, w.strategy, w.gain);
    if let Some(o) = &report.offending {
        text += &format!("offending player {} strategy {} gain {}\n", o.player, o.strategy, o.gain);
    }
    if let Some(in_class) = report.class_note {
        text += &format!("best_deviation_in_class {in_class}\n");
    }
    if let Some(m) = report.min_losing_margin {
        text += &format!("min_losing_margin {m}\n");
    }
    if let Some(samples) = opts.samples {
        let q = opts.q.unwrap_or(1.0);
        let eps = opts.epsilon.unwrap_or(0.02);
        let v = check_variational(&meta, &profile, q, eps, samples, opts.master_seed());
        text += &format!(
            "variational q {q} c1 {} ({}) c2 {} ({}) epsilon {} samples {} excluded_in_class {}\n",
            v.c1_holds, v.c1_value, v.c2_holds, v.c2_max, v.epsilon_used, v.samples, v.excluded_in_class
        );
    }
    print!("{text}");
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("check_eq.txt"), &text)?;
        write_manifest(dir, Mode::CheckEq, opts, &["check_eq.txt"])?;
    }
    Ok(if report.is_strict {
        0
    } else if report.is_equilibrium {
        1
    } else {
        2
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn folk_set(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let geo = feasible_ir_set(&spec.stage)?;
    let n = spec.player_count();
    let mut text = String::new();
    for v in &geo.hull_vertices {
        text += &format!("vertex {}\n", join(v));
    }
    text += &format!("minmax_mixed {}", join(&geo.minmax_mixed));
    text += if geo.minmax_mixed_approximate { " approximate\n" } else { "\n" };
    text += &format!("minmax_pure {}\n", join(&geo.minmax_pure));
    let mut rows = Vec::new();
    for raw in &opts.points {
        let x: Vec<f64> = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad point coordinate {s:?}"))))
            .collect::<Result<_>>()?;
        if x.len() != n {
            return Err(Error::invalid(format!("point {raw:?} needs {n} coordinates")));
        }
        let verdicts = [
            geo.in_hull(&x)?,
            geo.contains(&x, IrVariant::Mixed)?,
            geo.contains(&x, IrVariant::Strict)?,
            geo.contains(&x, IrVariant::Pure)?,
        ];
        text += &format!(
            "point {} hull {} mixed {} strict {} pure {}\n",
            join(&x),
            verdicts[0],
            verdicts[1],
            verdicts[2],
            verdicts[3]
        );
        rows.push((x, verdicts));
    }
    print!("{text}");
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("folk.txt"), &text)?;
        let mut w = csv::Writer::from_writer(create(dir, "folk_points.csv")?);
        let mut header: Vec<String> = (0..n).map(|i| format!("x_{i}")).collect();
        header.extend(["in_hull", "in_mixed", "in_strict", "in_pure"].map(String::from));
        w.write_record(&header)?;
        for (x, v) in &rows {
            let mut rec: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            rec.extend(v.iter().map(|b| b.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        write_manifest(dir, Mode::FolkSet, opts, &["folk.txt", "folk_points.csv"])?;
    }
    Ok(EXIT_OK)
}

fn basin(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let seeds = opts.seeds.unwrap_or(100);
    let radius = opts.radius.unwrap_or(0.02);
    if seeds == 0 {
        return Err(Error::invalid("basin experiment needs at least one seed"));
    }
    let meta = build_meta(spec, 0.0)?;
    let src = opts
        .target
        .as_deref()
        .or(opts.profile.as_deref())
        .unwrap_or("grim");
    let target = io::load_profile(spec, meta.strategy_space(), src)?;
    let cfg = BasinConfig {
        dynamics: if opts.exact {
            BasinDynamics::Exact(opts.dynamics(10_000))
        } else {
            BasinDynamics::Stochastic(opts.stochastic(20_000))
        },
        threshold: opts.threshold.unwrap_or(0.05),
    };
    let result = basin_experiment(&meta, &target, radius, seeds, &cfg, opts.master_seed())?;
    let dir = opts.out_dir("out");
    std::fs::create_dir_all(&dir)?;
    io::write_basin_csv(create(&dir, "basin.csv")?, &result)?;
    write_manifest(&dir, Mode::Basin, opts, &["basin.csv"])?;
    println!(
        "target strict {} converged {}/{} mean final distance {}",
        result.target_strict, result.converged, result.tried, result.mean_final_distance
    );
    Ok(EXIT_OK)
}

fn meta_game(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let meta = build_meta(spec, opts.epsilon.unwrap_or(0.0))?;
    let dump = io::meta_game_dump(&meta);
    match &opts.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("meta_game.txt"), &dump)?;
            std::fs::write(dir.join("game.toml"), io::spec_to_toml(spec))?;
            write_manifest(dir, Mode::MetaGame, opts, &["meta_game.txt", "game.toml"])?;
        }
        None => print!("{dump}"),
    }
    Ok(EXIT_OK)
}

fn diagnose(spec: &RepeatedGameSpec, opts: &Options) -> Result<i32> {
    let meta = build_meta(spec, 0.0)?;
    let start = start_profile(&meta, opts)?;
    let cfg = opts.stochastic(2_000);
    let mut run_cfg = cfg.clone();
    if opts.stride.is_none() {
        run_cfg.dynamics.record_stride = (run_cfg.dynamics.max_steps / 10).max(1);
    }
    let seed = derive_seed(opts.master_seed(), stream::DYNAMICS, 0);
    let traj = run_stochastic(&meta, &start, &run_cfg, seed, None)?;
    let samples = opts.samples.unwrap_or(200);
    let q = cfg.dynamics.q;
    let diag = if opts.exact {
        let est = ExactGradient { meta: &meta, q };
        diagnose_noise(&meta, None, &traj.profiles, samples, &est, q, cfg.dynamics.p, opts.master_seed())?
    } else {
        let reference = build_meta(spec, cfg.epsilon)?;
        let est = Reinforce {
            spec,
            space: meta.strategy_space(),
            epsilon: cfg.epsilon,
            variant: cfg.variant,
            q,
        };
        diagnose_noise(&meta, Some(&reference), &traj.profiles, samples, &est, q, cfg.dynamics.p, opts.master_seed())?
    };
    let dir = opts.out_dir("out");
    std::fs::create_dir_all(&dir)?;
    io::write_diagnostics_csv(create(&dir, "diagnostics.csv")?, &diag)?;
    write_manifest(&dir, Mode::Diagnose, opts, &["diagnostics.csv"])?;
    println!(
        "estimator {} ell_sigma {} ell_b {} bias condition {} variance condition {}",
        diag.estimator, diag.ell_sigma, diag.ell_b, diag.bias_condition, diag.variance_condition
    );
    Ok(EXIT_OK)
}
