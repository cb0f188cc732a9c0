//! Command-line experiments: training, benchmark sweeps, policy
//! evaluation, and the oracle comparison.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{self, EvalStats, OracleGrid, OracleResult, PolicySpec};
use crate::config::ExperimentConfig;
use crate::ddpg::{self, Agent, TrainLogRow};
use crate::env::{Env, EnvState, Scenario};
use crate::error::{Error, Result};
use crate::noma::Access;
use crate::rng::derive_seed;

pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ORACLE_FILE: &str = "oracle.csv";

#[derive(Debug, Parser)]
#[command(name = "pinchwpt", version, about = "Energy-efficiency experiments for pinching-antenna uplinks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write its log, checkpoint, and evaluation.
    Train(TrainArgs),
    /// Train and evaluate every policy across antenna or user counts.
    Sweep(SweepArgs),
    /// Evaluate a checkpoint under one policy.
    Eval(EvalArgs),
    /// Compare a checkpoint against the exhaustive oracle on a frozen state.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Pas,
    Users,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Directory holding one experiment's outputs.
pub fn run_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir))
        .join(&cfg.run.experiment_id)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train an agent on the scenario `cfg` describes under `access`.
pub fn train_agent(cfg: &ExperimentConfig, access: Access, seed: u64, episodes: usize) -> Result<(Agent, Vec<TrainLogRow>)> {
    let scenario = Scenario::new(cfg.clone(), access);
    let mut env = Env::new(scenario, seed);
    ddpg::train(&mut env, &cfg.agent, episodes, seed, cfg.system.episode_length)
}

/// Seeds of the evaluation episodes that follow training with `seed`.
pub fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, "evaluation")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub seeds: String,
    pub episodes: usize,
    pub mean_ee: f64,
    pub median_ee: f64,
    pub std_ee: f64,
    pub rate_satisfaction: f64,
    pub mean_harvested_j: f64,
}

impl From<&EvalStats> for EvalRow {
    fn from(s: &EvalStats) -> Self {
        EvalRow {
            policy: s.policy.clone(),
            seeds: s.per_seed.iter().map(|(seed, _)| seed.to_string()).collect::<Vec<_>>().join(";"),
            episodes: s.episodes,
            mean_ee: s.mean_ee,
            median_ee: s.median_ee,
            std_ee: s.std_ee,
            rate_satisfaction: s.rate_satisfaction,
            mean_harvested_j: s.mean_harvested_j,
        }
    }
}

pub fn write_eval_csv<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<eval csv>", e))?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub experiment_id: String,
    pub seed: u64,
    pub episodes: usize,
    pub final_moving_avg_100: f64,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub agent: Agent,
    pub log: Vec<TrainLogRow>,
    pub summary: TrainSummary,
}

/// Train with optional overrides and write the experiment directory.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    episodes: Option<usize>,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    let seed = seed.unwrap_or(cfg.run.seeds[0]);
    cfg.run.seeds = vec![seed];
    if let Some(e) = episodes {
        cfg.run.episodes = e;
    }
    cfg.validate()?;
    let dir = run_dir(&cfg, out);
    create_dir(&dir)?;
    write_text(&dir.join(CONFIG_FILE), &cfg.canonical_json())?;

    let (agent, log) = train_agent(&cfg, Access::Noma, seed, cfg.run.episodes)?;
    ddpg::write_train_log(&log, create_file(&dir.join(TRAIN_LOG_FILE))?)?;
    agent.save(&dir.join(CHECKPOINT_FILE))?;

    let mut rows = Vec::new();
    for policy in PolicySpec::all(&cfg.benchmark) {
        if policy == PolicySpec::OmaDrl {
            continue;
        }
        let stats = baselines::evaluate_policy(&policy, &cfg, &agent, cfg.benchmark.eval_episodes, &[eval_seed(seed)])?;
        rows.push(EvalRow::from(&stats));
    }
    write_eval_csv(&rows, create_file(&dir.join(EVAL_FILE))?)?;

    let summary = TrainSummary {
        experiment_id: cfg.run.experiment_id.clone(),
        seed,
        episodes: cfg.run.episodes,
        final_moving_avg_100: log.last().map_or(f64::NAN, |r| r.moving_avg_100),
        config_hash: cfg.hash(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_text(&dir.join(SUMMARY_FILE), &serde_json::to_string_pretty(&summary)?)?;
    Ok(TrainOutcome {
        dir,
        agent,
        log,
        summary,
    })
}

/// Per-seed result of one policy at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeedRow {
    pub axis_value: usize,
    pub policy: String,
    pub seed: u64,
    pub mean_ee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: usize,
    pub policy: String,
    pub mean_ee: f64,
    pub std_ee: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub per_seed: Vec<SweepSeedRow>,
}

impl SweepOutcome {
    /// Per-seed mean efficiency of `policy` at `axis_value`, in seed order.
    pub fn seed_values(&self, axis_value: usize, policy: &str) -> Vec<(u64, f64)> {
        self.per_seed
            .iter()
            .filter(|r| r.axis_value == axis_value && r.policy == policy)
            .map(|r| (r.seed, r.mean_ee))
            .collect()
    }

    pub fn mean(&self, axis_value: usize, policy: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.policy == policy)
            .map(|r| r.mean_ee)
    }
}

fn sweep_point_config(cfg: &ExperimentConfig, axis: Axis, value: usize) -> Result<ExperimentConfig> {
    if value == 0 {
        return Err(Error::config("values", "sweep values must be positive"));
    }
    let (k, n) = match axis {
        Axis::Pas => (cfg.system.num_users, value),
        Axis::Users => (value, cfg.system.num_pas),
    };
    cfg.with_counts(k, n)
}

/// Evaluate every policy at one sweep point and seed. The NOMA agent drives
/// the four NOMA policies; a separately trained agent drives OMA.
pub fn sweep_point(cfg: &ExperimentConfig, seed: u64, policies: &[PolicySpec]) -> Result<Vec<(String, f64)>> {
    let episodes = cfg.run.episodes;
    let needs_noma = policies.iter().any(|p| p.access() == Access::Noma);
    let needs_oma = policies.iter().any(|p| p.access() == Access::Oma);
    let noma = if needs_noma {
        Some(train_agent(cfg, Access::Noma, seed, episodes)?.0)
    } else {
        None
    };
    let oma = if needs_oma {
        Some(train_agent(cfg, Access::Oma, seed, episodes)?.0)
    } else {
        None
    };
    let mut out = Vec::with_capacity(policies.len());
    for policy in policies {
        let agent = match policy.access() {
            Access::Noma => noma.as_ref(),
            Access::Oma => oma.as_ref(),
        }
        .expect("agent trained for every access scheme in use");
        let stats = baselines::evaluate_policy(policy, cfg, agent, cfg.benchmark.eval_episodes, &[eval_seed(seed)])?;
        out.push((policy.name().to_string(), stats.mean_ee));
    }
    Ok(out)
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: Axis,
    values: &[usize],
    seeds: Option<&[u64]>,
    out: Option<&Path>,
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::config("values", "need at least one sweep value"));
    }
    let seeds: Vec<u64> = seeds.map_or_else(|| cfg.run.seeds.clone(), <[u64]>::to_vec);
    if seeds.is_empty() {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    let points: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| sweep_point_config(cfg, axis, v))
        .collect::<Result<_>>()?;
    let dir = run_dir(cfg, out);
    create_dir(&dir)?;
    write_text(&dir.join(CONFIG_FILE), &cfg.canonical_json())?;

    let policies = PolicySpec::all(&cfg.benchmark);
    let mut per_seed = Vec::new();
    for (&value, point) in values.iter().zip(&points) {
        for &seed in &seeds {
            for (policy, mean_ee) in sweep_point(point, seed, &policies)? {
                per_seed.push(SweepSeedRow {
                    axis_value: value,
                    policy,
                    seed,
                    mean_ee,
                });
            }
        }
    }
    let rows = aggregate(values, &policies, &per_seed);
    let name = match axis {
        Axis::Pas => "pas",
        Axis::Users => "users",
    };
    write_rows(&rows, &dir.join(format!("sweep_{name}.csv")))?;
    write_rows(&per_seed, &dir.join(format!("sweep_{name}_per_seed.csv")))?;
    Ok(SweepOutcome { rows, per_seed })
}

fn aggregate(values: &[usize], policies: &[PolicySpec], per_seed: &[SweepSeedRow]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &value in values {
        for policy in policies {
            let mut xs: Vec<f64> = per_seed
                .iter()
                .filter(|r| r.axis_value == value && r.policy == policy.name())
                .map(|r| r.mean_ee)
                .collect();
            xs.sort_by(f64::total_cmp);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                axis_value: value,
                policy: policy.name().to_string(),
                mean_ee: mean,
                std_ee: std,
            });
        }
    }
    rows
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn load_matching_agent(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Agent> {
    let agent = Agent::load(checkpoint)?;
    if agent.observation_dim != cfg.system.observation_dim() || agent.action_dim != cfg.system.action_dim() {
        return Err(Error::usage(format!(
            "checkpoint was trained for {} observations and {} actions; the configuration needs {} and {}",
            agent.observation_dim,
            agent.action_dim,
            cfg.system.observation_dim(),
            cfg.system.action_dim()
        )));
    }
    Ok(agent)
}

/// Evaluate a checkpoint under one policy over the configured seeds.
pub fn cmd_eval(cfg: &ExperimentConfig, policy: &str, checkpoint: &Path, out: Option<&Path>) -> Result<EvalStats> {
    let policy = PolicySpec::parse(policy, &cfg.benchmark)?;
    let agent = load_matching_agent(cfg, checkpoint)?;
    let seeds: Vec<u64> = cfg.run.seeds.iter().map(|&s| eval_seed(s)).collect();
    let stats = baselines::evaluate_policy(&policy, cfg, &agent, cfg.benchmark.eval_episodes, &seeds)?;
    let dir = run_dir(cfg, out);
    create_dir(&dir)?;
    write_eval_csv(&[EvalRow::from(&stats)], create_file(&dir.join(EVAL_FILE))?)?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance_seed: u64,
    pub oracle: OracleResult,
    pub agent_ee: f64,
    /// `agent_ee / oracle_ee`; NaN when no grid point is feasible.
    pub ratio: f64,
}

/// State the oracle comparison freezes for `instance_seed`.
pub fn frozen_state(cfg: &ExperimentConfig, instance_seed: u64) -> EnvState {
    let scenario = Scenario::new(cfg.clone(), Access::Noma);
    Env::new(scenario, derive_seed(instance_seed, "frozen-instance")).state().clone()
}

/// Oracle versus agent on one frozen state.
pub fn oracle_compare<C: baselines::Controller + ?Sized>(
    cfg: &ExperimentConfig,
    instance_seed: u64,
    controller: &C,
) -> Result<OracleReport> {
    let sys = &cfg.system;
    if sys.num_users > 2 || sys.num_pas > 2 {
        return Err(Error::usage(format!(
            "oracle check is limited to at most 2 users and 2 antennas (got {} and {})",
            sys.num_users, sys.num_pas
        )));
    }
    let scenario = Scenario::new(cfg.clone(), Access::Noma);
    let state = frozen_state(cfg, instance_seed);
    let grid = OracleGrid::from_benchmark(sys, &cfg.benchmark);
    let oracle = baselines::brute_force_oracle(state.true_view(), &scenario, &grid)?;
    let agent_ee = baselines::single_slot_ee(&scenario, &state, controller)?;
    let ratio = oracle.best_ee.map_or(f64::NAN, |best| agent_ee / best);
    Ok(OracleReport {
        instance_seed,
        oracle,
        agent_ee,
        ratio,
    })
}

pub fn cmd_oracle_check(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<OracleReport> {
    let sys = &cfg.system;
    if sys.num_users > 2 || sys.num_pas > 2 {
        return Err(Error::usage(format!(
            "oracle check is limited to at most 2 users and 2 antennas (got {} and {})",
            sys.num_users, sys.num_pas
        )));
    }
    let agent = load_matching_agent(cfg, checkpoint)?;
    let report = oracle_compare(cfg, cfg.run.seeds[0], &agent)?;
    let dir = run_dir(cfg, out);
    create_dir(&dir)?;
    baselines::write_oracle_csv(&[(report.instance_seed, report.oracle.clone())], create_file(&dir.join(ORACLE_FILE))?)?;
    Ok(report)
}

/// Execute a parsed command line, printing a short report to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = ExperimentConfig::from_path(&a.config)?;
            let o = cmd_train(&cfg, a.seed, a.episodes.map(|e| e as usize), a.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&o.summary)?);
            println!("outputs written to {}", o.dir.display());
        }
        Command::Sweep(a) => {
            let cfg = ExperimentConfig::from_path(&a.config)?;
            let o = cmd_sweep(&cfg, a.axis, &a.values, a.seeds.as_deref(), a.out.as_deref())?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &o.rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Eval(a) => {
            let cfg = ExperimentConfig::from_path(&a.config)?;
            let stats = cmd_eval(&cfg, &a.policy, &a.checkpoint, a.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::OracleCheck(a) => {
            let cfg = ExperimentConfig::from_path(&a.config)?;
            let report = cmd_oracle_check(&cfg, &a.checkpoint, a.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
