//! Python bindings: configuration, channel and energy primitives, the slot
//! environment, agent training, policy evaluation, and the oracle check.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pinchwpt::baselines::{self, PolicySpec};
use pinchwpt::ddpg;
use pinchwpt::energy::{self, EhParams};
use pinchwpt::experiment;
use pinchwpt::geometry::{self, PaLayout, UserPosition};
use pinchwpt::noma;
use pinchwpt::{Access, Error, ExperimentConfig, Scenario};

create_exception!(pinchwpt, ConfigError, PyValueError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => ConfigError::new_err(e.to_string()),
        Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_access(name: &str) -> PyResult<Access> {
    match name {
        "noma" => Ok(Access::Noma),
        "oma" => Ok(Access::Oma),
        other => Err(PyValueError::new_err(format!("access must be 'noma' or 'oma', got '{other}'"))),
    }
}

/// Validated experiment configuration.
#[pyclass(name = "Config", module = "pinchwpt")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Build from a JSON document; omitted keys take their defaults.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => ExperimentConfig::from_json_str(text).map_err(to_py)?,
            None => ExperimentConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::from_path(path).map_err(to_py)?,
        })
    }

    /// Copy with different user and antenna counts.
    fn with_counts(&self, num_users: usize, num_pas: usize) -> PyResult<Self> {
        Ok(PyConfig {
            inner: self.inner.with_counts(num_users, num_pas).map_err(to_py)?,
        })
    }

    /// Copy with estimation errors switched off.
    fn without_uncertainty(&self) -> Self {
        let mut inner = self.inner.clone();
        inner.uncertainty = pinchwpt::config::UncertaintyParams::none();
        PyConfig { inner }
    }

    fn to_json(&self) -> String {
        self.inner.canonical_json()
    }

    #[getter]
    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.system.num_users
    }

    #[getter]
    fn num_pas(&self) -> usize {
        self.inner.system.num_pas
    }

    #[getter]
    fn episode_length(&self) -> usize {
        self.inner.system.episode_length
    }

    #[getter]
    fn observation_dim(&self) -> usize {
        self.inner.system.observation_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.system.action_dim()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(num_users={}, num_pas={}, hash='{}')",
            self.inner.system.num_users,
            self.inner.system.num_pas,
            &self.inner.hash()[..12]
        )
    }
}

/// Share of guided power coupled out by antenna `index` (1-based).
#[pyfunction]
fn power_split(index: usize, delta: f64) -> f64 {
    geometry::power_split(index, delta)
}

/// Line-of-sight coefficient between a ground user and a radiating point.
#[pyfunction]
fn free_space_coeff(user_xy: (f64, f64), pa_xyz: (f64, f64, f64), wavelength_m: f64) -> PyResult<Complex64> {
    let user = UserPosition::new(user_xy.0, user_xy.1);
    geometry::free_space_coeff(&user, [pa_xyz.0, pa_xyz.1, pa_xyz.2], wavelength_m).map_err(to_py)
}

/// Coherent channel from every antenna of `layout_m` to a user.
#[pyfunction]
fn composite_gain(config: PyRef<'_, PyConfig>, user_xy: (f64, f64), layout_m: Vec<f64>) -> PyResult<Complex64> {
    let sys = &config.inner.system;
    let layout = PaLayout::new(layout_m, sys).map_err(to_py)?;
    geometry::composite_gain(&UserPosition::new(user_xy.0, user_xy.1), &layout, sys).map_err(to_py)
}

/// Feasible layout nearest to arbitrary raw positions.
#[pyfunction]
fn project_layout(config: PyRef<'_, PyConfig>, raw_m: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(geometry::project_layout(&raw_m, &config.inner.system)
        .map_err(to_py)?
        .positions()
        .to_vec())
}

/// Energy harvested in the charging share `beta` of a slot.
#[pyfunction]
fn harvested_energy(beta: f64, slot_s: f64, rx_power_w: f64, sensitivity_a: f64, threshold_b: f64, saturation_w: f64) -> PyResult<f64> {
    let eh = EhParams {
        sensitivity_a,
        threshold_b,
        saturation_iota: saturation_w,
    };
    energy::harvested_energy(beta, slot_s, rx_power_w, &eh).map_err(to_py)
}

/// Per-user spectral efficiencies, indexed by user.
#[pyfunction]
#[pyo3(signature = (powers_w, gains, noise_w, beta, access = "noma"))]
fn rates(powers_w: Vec<f64>, gains: Vec<Complex64>, noise_w: f64, beta: f64, access: &str) -> PyResult<Vec<f64>> {
    let report = noma::rates(parse_access(access)?, &powers_w, &gains, noise_w, beta).map_err(to_py)?;
    Ok(report.per_user_rate_bpshz)
}

/// Sum rate over fixed plus transmit power.
#[pyfunction]
fn ee_value(rates: Vec<f64>, powers_w: Vec<f64>, fixed_power_w: f64) -> f64 {
    let report = noma::RateReport {
        order: (0..rates.len()).collect(),
        sum_rate_bpshz: rates.iter().sum(),
        per_user_rate_bpshz: rates,
    };
    noma::ee_value(&report, &powers_w, fixed_power_w)
}

/// The slot-level environment.
#[pyclass(name = "Env", module = "pinchwpt")]
struct PyEnv {
    inner: pinchwpt::Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (config, seed = 0, access = "noma"))]
    fn new(config: PyRef<'_, PyConfig>, seed: u64, access: &str) -> PyResult<Self> {
        let scenario = Scenario::new(config.inner.clone(), parse_access(access)?);
        Ok(PyEnv {
            inner: pinchwpt::Env::new(scenario, seed),
        })
    }

    /// Start a new episode and return its first observation.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed);
        self.inner.observation()
    }

    fn observation(&self) -> Vec<f64> {
        self.inner.observation()
    }

    #[getter]
    fn slot_index(&self) -> usize {
        self.inner.state().slot_index
    }

    #[getter]
    fn true_batteries_j(&self) -> Vec<f64> {
        self.inner.state().true_batteries_j.clone()
    }

    /// Apply a raw action in [-1, 1]; returns (observation, reward, done, info).
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, Bound<'py, PyDict>)> {
        let out = self.inner.step(&action).map_err(to_py)?;
        let d = &out.diagnostics;
        let info = PyDict::new(py);
        info.set_item("powers_w", d.powers_w.clone())?;
        info.set_item("layout_m", d.layout_m.clone())?;
        info.set_item("beta", d.beta)?;
        info.set_item("rates_bpshz", d.per_user_rate_bpshz.clone())?;
        info.set_item("sum_rate_bpshz", d.sum_rate_bpshz)?;
        info.set_item("ee", d.ee_bpshz_per_w)?;
        info.set_item("harvested_j", d.harvested_j.clone())?;
        info.set_item("consumed_j", d.consumed_j.clone())?;
        info.set_item("available_j", d.available_j.clone())?;
        info.set_item("batteries_after_j", d.batteries_after_j.clone())?;
        info.set_item("rate_violation", d.rate_violation)?;
        Ok((self.inner.observation(), out.reward, out.done, info))
    }
}

/// A trained (or freshly initialized) actor-critic agent.
#[pyclass(name = "Agent", module = "pinchwpt")]
struct PyAgent {
    inner: ddpg::Agent,
}

#[pymethods]
impl PyAgent {
    /// Deterministic policy output for one observation.
    fn act(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.policy(&observation).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyAgent {
            inner: ddpg::Agent::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim
    }
}

/// Train an agent; returns it with the per-episode returns.
#[pyfunction]
#[pyo3(signature = (config, seed = 0, episodes = None, access = "noma"))]
fn train(
    py: Python<'_>,
    config: PyRef<'_, PyConfig>,
    seed: u64,
    episodes: Option<usize>,
    access: &str,
) -> PyResult<(PyAgent, Vec<f64>)> {
    let cfg = config.inner.clone();
    let access = parse_access(access)?;
    let episodes = episodes.unwrap_or(cfg.run.episodes);
    let (agent, log) = py
        .detach(|| experiment::train_agent(&cfg, access, seed, episodes))
        .map_err(to_py)?;
    Ok((PyAgent { inner: agent }, log.iter().map(|r| r.episode_return).collect()))
}

/// Frozen-policy statistics of one benchmark policy driven by `agent`.
#[pyfunction]
#[pyo3(signature = (config, agent, policy = "drl", episodes = None, seeds = None))]
fn evaluate<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyConfig>,
    agent: PyRef<'_, PyAgent>,
    policy: &str,
    episodes: Option<usize>,
    seeds: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    let spec = PolicySpec::parse(policy, &cfg.benchmark).map_err(to_py)?;
    let seeds = seeds.unwrap_or_else(|| cfg.run.seeds.iter().map(|&s| experiment::eval_seed(s)).collect());
    let episodes = episodes.unwrap_or(cfg.benchmark.eval_episodes);
    let stats = baselines::evaluate_policy(&spec, cfg, &agent.inner, episodes, &seeds).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("policy", stats.policy)?;
    out.set_item("episodes", stats.episodes)?;
    out.set_item("mean_ee", stats.mean_ee)?;
    out.set_item("median_ee", stats.median_ee)?;
    out.set_item("std_ee", stats.std_ee)?;
    out.set_item("rate_satisfaction", stats.rate_satisfaction)?;
    out.set_item("mean_harvested_j", stats.mean_harvested_j)?;
    Ok(out)
}

/// Agent versus exhaustive grid search on a frozen single-slot instance.
#[pyfunction]
#[pyo3(signature = (config, agent, instance_seed = 0))]
fn oracle_check<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyConfig>,
    agent: PyRef<'_, PyAgent>,
    instance_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let report = experiment::oracle_compare(&config.inner, instance_seed, &agent.inner).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("instance_seed", report.instance_seed)?;
    out.set_item("oracle_ee", report.oracle.best_ee)?;
    out.set_item("agent_ee", report.agent_ee)?;
    out.set_item("ratio", report.ratio)?;
    out.set_item("evaluations", report.oracle.evaluations)?;
    if let Some(best) = report.oracle.best_action {
        out.set_item("best_powers_w", best.powers_w)?;
        out.set_item("best_layout_m", best.layout.positions().to_vec())?;
        out.set_item("best_beta", best.beta)?;
    }
    Ok(out)
}

#[pymodule]
#[pyo3(name = "pinchwpt")]
fn pinchwpt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(power_split, m)?)?;
    m.add_function(wrap_pyfunction!(free_space_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(composite_gain, m)?)?;
    m.add_function(wrap_pyfunction!(project_layout, m)?)?;
    m.add_function(wrap_pyfunction!(harvested_energy, m)?)?;
    m.add_function(wrap_pyfunction!(rates, m)?)?;
    m.add_function(wrap_pyfunction!(ee_value, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
