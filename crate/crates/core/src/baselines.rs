//! Benchmark placement policies, an exhaustive single-slot oracle, and a
//! frozen-policy evaluation harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{BenchmarkConfig, ExperimentConfig, SystemConfig};
use crate::ddpg::Agent;
use crate::env::{self, ActionRequest, Env, EnvState, Scenario, SlotView};
use crate::error::{Error, Result};
use crate::geometry::{PaLayout, LAYOUT_TOLERANCE_M};
use crate::noma::Access;
use crate::rng::derive_indexed;

/// Upper bound on the number of Cartesian grid points the oracle will scan.
pub const ORACLE_GRID_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Learned placement, powers, and ratio.
    Drl,
    /// Static uniform placement.
    Fixed,
    /// Best subset of a uniform grid.
    Discrete { grid_points: usize },
    /// Best offset of an equally spaced array.
    ContinuousConstrained { offset_steps: usize },
    /// Learned policy under orthogonal access.
    OmaDrl,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Drl => "drl",
            PolicySpec::Fixed => "fixed",
            PolicySpec::Discrete { .. } => "discrete",
            PolicySpec::ContinuousConstrained { .. } => "continuous_constrained",
            PolicySpec::OmaDrl => "oma",
        }
    }

    pub fn access(&self) -> Access {
        match self {
            PolicySpec::OmaDrl => Access::Oma,
            _ => Access::Noma,
        }
    }

    /// Parse a policy name, taking grid sizes from `bench`.
    pub fn parse(name: &str, bench: &BenchmarkConfig) -> Result<PolicySpec> {
        let spec = match name {
            "drl" => PolicySpec::Drl,
            "fixed" => PolicySpec::Fixed,
            "discrete" => PolicySpec::Discrete {
                grid_points: bench.grid_points,
            },
            "continuous_constrained" | "continuous" => PolicySpec::ContinuousConstrained {
                offset_steps: bench.offset_steps,
            },
            "oma" | "oma_drl" => PolicySpec::OmaDrl,
            other => {
                return Err(Error::config(
                    "policy",
                    format!("unknown policy `{other}`; expected drl, fixed, discrete, continuous_constrained, or oma"),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::Discrete { grid_points } if grid_points == 0 => {
                Err(Error::config("grid_points", "must be at least 1"))
            }
            PolicySpec::ContinuousConstrained { offset_steps } if offset_steps == 0 => {
                Err(Error::config("offset_steps", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// All five policies with grid sizes from `bench`.
    pub fn all(bench: &BenchmarkConfig) -> Vec<PolicySpec> {
        vec![
            PolicySpec::Drl,
            PolicySpec::Fixed,
            PolicySpec::Discrete {
                grid_points: bench.grid_points,
            },
            PolicySpec::ContinuousConstrained {
                offset_steps: bench.offset_steps,
            },
            PolicySpec::OmaDrl,
        ]
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicySpec::parse(s, &BenchmarkConfig::default())
    }
}

/// Uniformly spaced static layout `x_n = (n - 1/2) L / N`.
pub fn fixed_layout_policy(sys: &SystemConfig) -> Result<PaLayout> {
    let n = sys.num_pas as f64;
    let pitch = sys.waveguide_length_m / n;
    if sys.min_spacing_m > pitch + LAYOUT_TOLERANCE_M {
        return Err(Error::config(
            "min_spacing_m",
            format!("spacing {} exceeds the uniform pitch {pitch}", sys.min_spacing_m),
        ));
    }
    let xs = (0..sys.num_pas).map(|i| (i as f64 + 0.5) * pitch).collect();
    PaLayout::new(xs, sys)
}

/// The `points` uniform candidate positions, endpoints included.
pub fn position_grid(points: usize, length_m: f64) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        g => (0..g).map(|i| i as f64 * length_m / (g - 1) as f64).collect(),
    }
}

/// Every strictly increasing `n`-subset of `grid` honouring the spacing,
/// in lexicographic order of grid indices.
pub fn feasible_subsets(grid: &[f64], sys: &SystemConfig) -> Vec<PaLayout> {
    let n = sys.num_pas;
    let mut out = Vec::new();
    if n == 0 || grid.len() < n {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let xs: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        if let Ok(layout) = PaLayout::new(xs, sys) {
            out.push(layout);
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < grid.len() - n + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Ranking of one candidate layout for fixed requested powers and ratio:
/// rate-feasible candidates first, then higher energy efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutScore {
    pub meets_rate_target: bool,
    pub ee: f64,
}

impl LayoutScore {
    fn beats(&self, other: &LayoutScore) -> bool {
        match (self.meets_rate_target, other.meets_rate_target) {
            (true, false) => true,
            (false, true) => false,
            _ => self.ee > other.ee,
        }
    }
}

/// Score a layout: requested powers are clipped to the energy caps of `view`.
pub fn layout_score(
    view: SlotView<'_>,
    powers_w: &[f64],
    beta: f64,
    layout: &PaLayout,
    sc: &Scenario,
) -> Result<LayoutScore> {
    let physics = env::slot_physics(view, layout, beta, sc)?;
    let powers: Vec<f64> = powers_w
        .iter()
        .zip(&physics.power_caps_w)
        .map(|(p, cap)| p.min(*cap))
        .collect();
    let score = env::score_slot(&powers, beta, &physics.gains, sc)?;
    Ok(LayoutScore {
        meets_rate_target: score.meets_rate_target,
        ee: score.ee,
    })
}

fn best_layout<'a>(
    candidates: impl IntoIterator<Item = PaLayout>,
    view: SlotView<'a>,
    powers_w: &[f64],
    beta: f64,
    sc: &Scenario,
) -> Result<Option<(PaLayout, LayoutScore)>> {
    let mut best: Option<(PaLayout, LayoutScore)> = None;
    for layout in candidates {
        let score = layout_score(view, powers_w, beta, &layout, sc)?;
        if best.as_ref().map_or(true, |(_, b)| score.beats(b)) {
            best = Some((layout, score));
        }
    }
    Ok(best)
}

/// Exhaustive search over feasible subsets of a `grid_points` uniform grid.
pub fn discrete_position_search(
    view: SlotView<'_>,
    powers_w: &[f64],
    beta: f64,
    sc: &Scenario,
    grid_points: usize,
) -> Result<PaLayout> {
    let sys = sc.system();
    if grid_points < sys.num_pas {
        return Err(Error::config(
            "grid_points",
            format!("{grid_points} grid points cannot host {} antennas", sys.num_pas),
        ));
    }
    let grid = position_grid(grid_points, sys.waveguide_length_m);
    let subsets = feasible_subsets(&grid, sys);
    if subsets.is_empty() {
        return Err(Error::config(
            "grid_points",
            "no subset of the grid satisfies the minimum spacing",
        ));
    }
    Ok(best_layout(subsets, view, powers_w, beta, sc)?
        .expect("non-empty candidate set")
        .0)
}

/// Layouts `x_n = o + (n - 1) * delta` swept over the feasible offsets.
pub fn equal_spacing_candidates(sys: &SystemConfig, offset_steps: usize) -> Result<Vec<PaLayout>> {
    if offset_steps == 0 {
        return Err(Error::config("offset_steps", "must be at least 1"));
    }
    let n = sys.num_pas;
    let length = sys.waveguide_length_m;
    let delta = sys.min_spacing_m.max(length / n as f64);
    let span = (n as f64 - 1.0) * delta;
    if span > length + LAYOUT_TOLERANCE_M {
        return Err(Error::config(
            "min_spacing_m",
            "equally spaced array does not fit on the waveguide",
        ));
    }
    let free = (length - span).max(0.0);
    (0..offset_steps)
        .map(|j| {
            let o = if offset_steps == 1 {
                0.0
            } else {
                j as f64 * free / (offset_steps - 1) as f64
            };
            let xs = (0..n).map(|i| (o + i as f64 * delta).min(length)).collect();
            PaLayout::new(xs, sys)
        })
        .collect()
}

pub fn equal_spacing_offset_search(
    view: SlotView<'_>,
    powers_w: &[f64],
    beta: f64,
    sc: &Scenario,
    offset_steps: usize,
) -> Result<PaLayout> {
    let candidates = equal_spacing_candidates(sc.system(), offset_steps)?;
    Ok(best_layout(candidates, view, powers_w, beta, sc)?
        .expect("at least one offset")
        .0)
}

/// Candidate values of the oracle scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub betas: Vec<f64>,
    /// One candidate list per user.
    pub powers_w: Vec<Vec<f64>>,
    /// Candidate positions shared by every antenna.
    pub positions_m: Vec<f64>,
}

impl OracleGrid {
    /// Uniform grids including both ends of every range.
    pub fn uniform(sys: &SystemConfig, beta_points: usize, power_points: usize, position_points: usize) -> Self {
        let lin = |points: usize, hi: f64| -> Vec<f64> {
            match points {
                0 => vec![],
                1 => vec![0.0],
                g => (0..g).map(|i| i as f64 * hi / (g - 1) as f64).collect(),
            }
        };
        OracleGrid {
            betas: lin(beta_points, 1.0),
            powers_w: vec![lin(power_points, sys.max_tx_power_w); sys.num_users],
            positions_m: position_grid(position_points, sys.waveguide_length_m),
        }
    }

    pub fn from_benchmark(sys: &SystemConfig, bench: &BenchmarkConfig) -> Self {
        Self::uniform(
            sys,
            bench.oracle_beta_points,
            bench.oracle_power_points,
            bench.oracle_position_points,
        )
    }

    /// Number of points in the full Cartesian product.
    pub fn cartesian_size(&self, num_pas: usize) -> u64 {
        let mut total = self.betas.len() as u64;
        for p in &self.powers_w {
            total = total.saturating_mul(p.len() as u64);
        }
        for _ in 0..num_pas {
            total = total.saturating_mul(self.positions_m.len() as u64);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best energy efficiency over feasible points; `None` if none is feasible.
    pub best_ee: Option<f64>,
    pub best_action: Option<ActionRequest>,
    pub grid_sizes: Vec<usize>,
    /// Grid points whose energy efficiency was computed.
    pub evaluations: u64,
    pub feasible_points: u64,
}

/// Exhaustive single-slot maximization of energy efficiency over `grid`.
/// Points violating the rate target or any user's energy budget are
/// discarded. Scan order is lexicographic in `(beta, p_1..p_K, x_1..x_N)`
/// and the first maximizer wins.
pub fn brute_force_oracle(view: SlotView<'_>, sc: &Scenario, grid: &OracleGrid) -> Result<OracleResult> {
    let sys = sc.system();
    let k = sys.num_users;
    if grid.powers_w.len() != k {
        return Err(Error::usage("oracle needs one power grid per user"));
    }
    let size = grid.cartesian_size(sys.num_pas);
    if size > ORACLE_GRID_LIMIT {
        return Err(Error::usage(format!(
            "oracle grid has {size} points, above the limit of {ORACLE_GRID_LIMIT}"
        )));
    }
    let mut sorted = grid.positions_m.clone();
    sorted.sort_by(f64::total_cmp);
    let layouts = feasible_subsets(&sorted, sys);
    let mut grid_sizes = vec![grid.betas.len()];
    grid_sizes.extend(grid.powers_w.iter().map(Vec::len));
    grid_sizes.push(grid.positions_m.len());

    let mut result = OracleResult {
        best_ee: None,
        best_action: None,
        grid_sizes,
        evaluations: 0,
        feasible_points: 0,
    };
    if grid.powers_w.iter().any(Vec::is_empty) {
        return Ok(result);
    }
    for &beta in &grid.betas {
        let physics: Vec<env::SlotPhysics> = layouts
            .iter()
            .map(|l| env::slot_physics(view, l, beta, sc))
            .collect::<Result<_>>()?;
        let mut counter = vec![0usize; k];
        loop {
            let powers: Vec<f64> = (0..k).map(|u| grid.powers_w[u][counter[u]]).collect();
            for (layout, ph) in layouts.iter().zip(&physics) {
                if powers.iter().zip(&ph.power_caps_w).any(|(p, cap)| p > cap) {
                    continue;
                }
                let score = env::score_slot(&powers, beta, &ph.gains, sc)?;
                result.evaluations += 1;
                if !score.meets_rate_target {
                    continue;
                }
                result.feasible_points += 1;
                if result.best_ee.map_or(true, |b| score.ee > b) {
                    result.best_ee = Some(score.ee);
                    result.best_action = Some(ActionRequest {
                        powers_w: powers.clone(),
                        layout: layout.clone(),
                        beta,
                    });
                }
            }
            // odometer over the per-user power grids, last user fastest
            let mut u = k;
            loop {
                if u == 0 {
                    break;
                }
                u -= 1;
                counter[u] += 1;
                if counter[u] < grid.powers_w[u].len() {
                    break;
                }
                counter[u] = 0;
            }
            if counter.iter().all(|&c| c == 0) {
                break;
            }
        }
    }
    Ok(result)
}

/// Energy efficiency of `action` on `view`, computed the way the oracle does.
pub fn reevaluate(view: SlotView<'_>, action: &ActionRequest, sc: &Scenario) -> Result<f64> {
    let ph = env::slot_physics(view, &action.layout, action.beta, sc)?;
    Ok(env::score_slot(&action.powers_w, action.beta, &ph.gains, sc)?.ee)
}

/// Anything that maps an observation to a normalized action.
pub trait Controller {
    fn raw_action(&self, observation: &[f64]) -> Result<Vec<f64>>;
}

impl Controller for Agent {
    fn raw_action(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.policy(observation)
    }
}

impl<F> Controller for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn raw_action(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self(observation)
    }
}

/// The physical request a policy makes in the current slot. Powers and the
/// ratio come from the controller; placement from the policy kind, chosen
/// on the estimated state.
pub fn policy_request<C: Controller + ?Sized>(policy: &PolicySpec, env: &Env, controller: &C) -> Result<ActionRequest> {
    let sc = env.scenario();
    let sys = sc.system();
    let k = sys.num_users;
    let raw = controller.raw_action(&env.observation())?;
    let decoded = env.decode(&raw)?;
    let beta = decoded.decoded_beta;
    let requested: Vec<f64> = decoded.raw[..k]
        .iter()
        .map(|r| (r + 1.0) / 2.0 * sys.max_tx_power_w)
        .collect();
    let view = env.state().estimated_view();
    let layout = match *policy {
        PolicySpec::Drl | PolicySpec::OmaDrl => decoded.decoded_layout,
        PolicySpec::Fixed => fixed_layout_policy(sys)?,
        PolicySpec::Discrete { grid_points } => discrete_position_search(view, &requested, beta, sc, grid_points)?,
        PolicySpec::ContinuousConstrained { offset_steps } => {
            equal_spacing_offset_search(view, &requested, beta, sc, offset_steps)?
        }
    };
    Ok(ActionRequest {
        powers_w: requested,
        layout,
        beta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub policy: String,
    pub episodes: usize,
    /// Statistics of the per-episode sum of slot energy efficiencies.
    pub mean_ee: f64,
    pub median_ee: f64,
    pub std_ee: f64,
    /// Fraction of user-slots meeting the rate target.
    pub rate_satisfaction: f64,
    pub mean_harvested_j: f64,
    /// Mean episodic energy efficiency per seed, sorted by seed.
    pub per_seed: Vec<(u64, f64)>,
}

/// Seed of the environment draw for an evaluation episode.
pub fn eval_episode_seed(seed: u64, episode: usize) -> u64 {
    derive_indexed(seed, "eval-episode", episode as u64)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Run frozen-policy episodes and summarize them. Results do not depend on
/// the order of `seeds`.
pub fn evaluate_policy<C: Controller + ?Sized>(
    policy: &PolicySpec,
    cfg: &ExperimentConfig,
    controller: &C,
    episodes: usize,
    seeds: &[u64],
) -> Result<EvalStats> {
    if seeds.is_empty() {
        return Err(Error::usage("evaluation needs at least one seed"));
    }
    if episodes == 0 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    policy.validate()?;
    let sc = Scenario::new(cfg.clone(), policy.access());
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let mut episode_ee = Vec::new();
    let mut per_seed = Vec::new();
    let (mut satisfied, mut user_slots) = (0usize, 0usize);
    let mut harvested = Vec::new();
    for &seed in &seeds {
        let mut env = Env::new(sc.clone(), seed);
        let mut seed_ee = Vec::with_capacity(episodes);
        for e in 0..episodes {
            env.reset(eval_episode_seed(seed, e));
            let mut total = 0.0;
            while !env.is_done() {
                let request = policy_request(policy, &env, controller)?;
                let out = env.step_request(&request)?;
                let d = &out.diagnostics;
                total += d.ee_bpshz_per_w;
                satisfied += d
                    .per_user_rate_bpshz
                    .iter()
                    .filter(|&&r| r >= sc.system().min_rate_bpshz)
                    .count();
                user_slots += d.per_user_rate_bpshz.len();
                harvested.push(mean(&d.harvested_j));
            }
            seed_ee.push(total);
        }
        per_seed.push((seed, mean(&seed_ee)));
        episode_ee.extend(seed_ee);
    }
    episode_ee.sort_by(f64::total_cmp);
    let m = mean(&episode_ee);
    let n = episode_ee.len();
    let median = if n % 2 == 1 {
        episode_ee[n / 2]
    } else {
        0.5 * (episode_ee[n / 2 - 1] + episode_ee[n / 2])
    };
    let std = if n > 1 {
        (episode_ee.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    harvested.sort_by(f64::total_cmp);
    Ok(EvalStats {
        policy: policy.name().to_string(),
        episodes: n,
        mean_ee: m,
        median_ee: median,
        std_ee: std,
        rate_satisfaction: satisfied as f64 / user_slots as f64,
        mean_harvested_j: mean(&harvested),
        per_seed,
    })
}

/// Energy efficiency the controller achieves in one slot from `state`,
/// counted as zero when some user misses the rate target.
pub fn single_slot_ee<C: Controller + ?Sized>(sc: &Scenario, state: &EnvState, controller: &C) -> Result<f64> {
    let mut env = Env::from_state(sc.clone(), state.clone(), 0);
    let raw = controller.raw_action(&env.observation())?;
    let out = env.step(&raw)?;
    Ok(if out.diagnostics.rate_violation {
        0.0
    } else {
        out.diagnostics.ee_bpshz_per_w
    })
}

/// Write oracle results as CSV; the header row names grid sizes and seeds.
pub fn write_oracle_csv<W: Write>(rows: &[(u64, OracleResult)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "grid_sizes", "best_ee", "beta", "powers_w", "layout_m", "evaluations"])?;
    for (seed, r) in rows {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        let (beta, powers, layout) = match &r.best_action {
            Some(a) => (a.beta.to_string(), join(&a.powers_w), join(a.layout.positions())),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            seed.to_string(),
            r.grid_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join("x"),
            r.best_ee.map_or(String::new(), |v| v.to_string()),
            beta,
            powers,
            layout,
            r.evaluations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<oracle csv>", e))?;
    Ok(())
}
