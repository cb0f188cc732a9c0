//! Experiment configuration and its JSON representation.
//!
//! A configuration document has one object per section:
//!
//! ```json
//! {
//!   "system": { "num_users": 3, "num_pas": 3, "noise_power_dbm": -90 },
//!   "eh": { "sensitivity_a": 150 },
//!   "battery": { "storage_efficiency": [0.9, 0.8, 0.9] },
//!   "uncertainty": { "location_sigma_m": 0.5 },
//!   "agent": { "learning_rate": 0.0005 },
//!   "benchmark": { "grid_points": 8 },
//!   "run": { "seeds": [0, 1, 2], "episodes": 300 }
//! }
//! ```
//!
//! Every section and every key is optional; missing values take the defaults
//! below and unknown keys are rejected. Ingestion resolves derived defaults
//! (waveguide length, minimum spacing) and converts dBm to watts, so the
//! canonical form written back by [`ExperimentConfig::canonical_json`] only
//! carries resolved SI values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Physical, protocol, and economic parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub carrier_frequency_hz: f64,
    pub pa_height_m: f64,
    pub region_x_m: f64,
    pub region_y_m: f64,
    pub num_users: usize,
    pub num_pas: usize,
    /// Along-waveguide coordinate of the feed point.
    pub feed_position_m: f64,
    pub effective_refractive_index: f64,
    /// Coupling strength, the sine of the coupling angle.
    pub coupling_delta: f64,
    pub attenuation_db_per_m: f64,
    pub min_spacing_m: f64,
    pub noise_power_w: f64,
    pub bs_wpt_power_w: f64,
    pub slot_duration_s: f64,
    pub fixed_circuit_power_w: f64,
    pub min_rate_bpshz: f64,
    pub waveguide_length_m: f64,
    /// Hardware cap on per-user transmit power.
    pub max_tx_power_w: f64,
    /// Reward returned when any user misses the rate target.
    pub penalty_reward: f64,
    /// Slots per episode.
    pub episode_length: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfigDoc {
    carrier_frequency_hz: Option<f64>,
    pa_height_m: Option<f64>,
    region_x_m: Option<f64>,
    region_y_m: Option<f64>,
    num_users: Option<usize>,
    num_pas: Option<usize>,
    feed_position_m: Option<f64>,
    effective_refractive_index: Option<f64>,
    coupling_delta: Option<f64>,
    attenuation_db_per_m: Option<f64>,
    min_spacing_m: Option<f64>,
    noise_power_w: Option<f64>,
    noise_power_dbm: Option<f64>,
    bs_wpt_power_w: Option<f64>,
    slot_duration_s: Option<f64>,
    fixed_circuit_power_w: Option<f64>,
    min_rate_bpshz: Option<f64>,
    waveguide_length_m: Option<f64>,
    max_tx_power_w: Option<f64>,
    penalty_reward: Option<f64>,
    episode_length: Option<usize>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfigDoc::default()
            .resolve()
            .expect("default system configuration is valid")
    }
}

impl SystemConfigDoc {
    fn resolve(self) -> Result<SystemConfig> {
        let noise_power_w = match (self.noise_power_w, self.noise_power_dbm) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "system.noise_power_dbm",
                    "give either noise_power_w or noise_power_dbm, not both",
                ))
            }
            (Some(w), None) => w,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => dbm_to_watts(-90.0),
        };
        let carrier_frequency_hz = self.carrier_frequency_hz.unwrap_or(28e9);
        let region_x_m = self.region_x_m.unwrap_or(60.0);
        let min_spacing_m = match self.min_spacing_m {
            Some(d) => d,
            None if carrier_frequency_hz > 0.0 => SPEED_OF_LIGHT / carrier_frequency_hz / 2.0,
            None => f64::NAN,
        };
        let cfg = SystemConfig {
            carrier_frequency_hz,
            pa_height_m: self.pa_height_m.unwrap_or(3.0),
            region_x_m,
            region_y_m: self.region_y_m.unwrap_or(20.0),
            num_users: self.num_users.unwrap_or(3),
            num_pas: self.num_pas.unwrap_or(3),
            feed_position_m: self.feed_position_m.unwrap_or(0.0),
            effective_refractive_index: self.effective_refractive_index.unwrap_or(1.4),
            coupling_delta: self
                .coupling_delta
                .unwrap_or(std::f64::consts::FRAC_PI_4.sin()),
            attenuation_db_per_m: self.attenuation_db_per_m.unwrap_or(0.5),
            min_spacing_m,
            noise_power_w,
            bs_wpt_power_w: self.bs_wpt_power_w.unwrap_or(1.0),
            slot_duration_s: self.slot_duration_s.unwrap_or(1.0),
            fixed_circuit_power_w: self.fixed_circuit_power_w.unwrap_or(0.1),
            min_rate_bpshz: self.min_rate_bpshz.unwrap_or(0.1),
            waveguide_length_m: self.waveguide_length_m.unwrap_or(region_x_m),
            max_tx_power_w: self.max_tx_power_w.unwrap_or(0.1),
            penalty_reward: self.penalty_reward.unwrap_or(-1.0),
            episode_length: self.episode_length.unwrap_or(20),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be a positive finite number, got {value}")))
    }
}

fn non_negative(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be a non-negative finite number, got {value}")))
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        positive("system.carrier_frequency_hz", self.carrier_frequency_hz)?;
        positive("system.pa_height_m", self.pa_height_m)?;
        positive("system.region_x_m", self.region_x_m)?;
        positive("system.region_y_m", self.region_y_m)?;
        positive("system.effective_refractive_index", self.effective_refractive_index)?;
        positive("system.waveguide_length_m", self.waveguide_length_m)?;
        positive("system.noise_power_w", self.noise_power_w)?;
        positive("system.slot_duration_s", self.slot_duration_s)?;
        positive("system.fixed_circuit_power_w", self.fixed_circuit_power_w)?;
        positive("system.max_tx_power_w", self.max_tx_power_w)?;
        non_negative("system.attenuation_db_per_m", self.attenuation_db_per_m)?;
        non_negative("system.min_spacing_m", self.min_spacing_m)?;
        non_negative("system.bs_wpt_power_w", self.bs_wpt_power_w)?;
        non_negative("system.min_rate_bpshz", self.min_rate_bpshz)?;
        if !self.penalty_reward.is_finite() {
            return Err(Error::config("system.penalty_reward", "must be finite"));
        }
        if self.num_users == 0 {
            return Err(Error::config("system.num_users", "need at least one user"));
        }
        if self.num_pas == 0 {
            return Err(Error::config("system.num_pas", "need at least one antenna"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("system.episode_length", "must be at least one slot"));
        }
        if !(self.coupling_delta > 0.0 && self.coupling_delta <= 1.0) {
            return Err(Error::config(
                "system.coupling_delta",
                format!("must lie in (0, 1], got {}", self.coupling_delta),
            ));
        }
        if self.num_pas as f64 * self.min_spacing_m > self.waveguide_length_m {
            return Err(Error::config(
                "system.min_spacing_m",
                format!(
                    "{} antennas spaced {} m apart do not fit on a {} m waveguide",
                    self.num_pas, self.min_spacing_m, self.waveguide_length_m
                ),
            ));
        }
        if !(self.feed_position_m >= 0.0 && self.feed_position_m <= self.waveguide_length_m) {
            return Err(Error::config(
                "system.feed_position_m",
                "feed must lie on the waveguide",
            ));
        }
        Ok(())
    }

    /// Free-space wavelength in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// Length of one action vector: K powers, N positions, one time-switching ratio.
    pub fn action_dim(&self) -> usize {
        self.num_users + self.num_pas + 1
    }

    /// Length of one observation vector.
    pub fn observation_dim(&self) -> usize {
        3 * self.num_users
    }
}

/// A scalar shared by all users, or one value per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    Shared(f64),
    Each(Vec<f64>),
}

impl PerUser {
    pub fn get(&self, user: usize) -> f64 {
        match self {
            PerUser::Shared(v) => *v,
            PerUser::Each(values) => values[user],
        }
    }

    fn check(&self, key: &str, num_users: usize, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        let values: Vec<f64> = match self {
            PerUser::Shared(v) => vec![*v],
            PerUser::Each(values) => {
                if values.len() != num_users {
                    return Err(Error::config(
                        key,
                        format!("expected {num_users} per-user values, got {}", values.len()),
                    ));
                }
                values.clone()
            }
        };
        match values.iter().find(|v| !(v.is_finite() && ok(**v))) {
            Some(bad) => Err(Error::config(key, format!("{what}, got {bad}"))),
            None => Ok(()),
        }
    }
}

/// Nonlinear harvester parameters in their per-user document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhConfig {
    pub sensitivity_a: PerUser,
    pub threshold_b: PerUser,
    pub saturation_iota: PerUser,
}

impl Default for EhConfig {
    fn default() -> Self {
        EhConfig {
            sensitivity_a: PerUser::Shared(150.0),
            threshold_b: PerUser::Shared(0.0014),
            saturation_iota: PerUser::Shared(0.024),
        }
    }
}

/// Battery parameters in their per-user document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub capacity_j: PerUser,
    pub storage_efficiency: PerUser,
    pub fixed_circuit_energy_j: PerUser,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            capacity_j: PerUser::Shared(0.1),
            storage_efficiency: PerUser::Shared(0.9),
            fixed_circuit_energy_j: PerUser::Shared(1e-5),
        }
    }
}

/// Bounds and spread of the state-estimation errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintyParams {
    pub battery_bound_j: f64,
    pub location_bound_m: f64,
    pub location_sigma_m: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams {
            battery_bound_j: 0.005,
            location_bound_m: 1.0,
            location_sigma_m: 0.5,
        }
    }
}

impl UncertaintyParams {
    pub fn none() -> Self {
        UncertaintyParams {
            battery_bound_j: 0.0,
            location_bound_m: 0.0,
            location_sigma_m: 0.0,
        }
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub discount: f64,
    pub soft_update_tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden_widths: Vec<usize>,
    /// Exploration noise std at the first episode; decays linearly.
    pub noise_std_start: f64,
    /// Exploration noise std at the last episode.
    pub noise_std_end: f64,
    /// Std of the smoothing noise added to target actions.
    pub target_noise_std: f64,
    /// Batched update rounds after each episode; `None` means one per slot.
    pub updates_per_episode: Option<usize>,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            discount: 0.9,
            soft_update_tau: 0.001,
            learning_rate: 5e-4,
            batch_size: 64,
            buffer_capacity: 10_000,
            hidden_widths: vec![256, 256],
            noise_std_start: 0.2,
            noise_std_end: 0.01,
            target_noise_std: 0.0,
            updates_per_episode: None,
            reward_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(Error::config("agent.discount", "must lie in [0, 1)"));
        }
        if !(self.soft_update_tau >= 0.0 && self.soft_update_tau <= 1.0) {
            return Err(Error::config("agent.soft_update_tau", "must lie in [0, 1]"));
        }
        positive("agent.learning_rate", self.learning_rate)?;
        positive("agent.reward_scale", self.reward_scale)?;
        non_negative("agent.noise_std_start", self.noise_std_start)?;
        non_negative("agent.noise_std_end", self.noise_std_end)?;
        non_negative("agent.target_noise_std", self.target_noise_std)?;
        if self.batch_size == 0 {
            return Err(Error::config("agent.batch_size", "must be positive"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::config(
                "agent.batch_size",
                "mini-batch cannot exceed the replay capacity",
            ));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("agent.hidden_widths", "widths must be positive"));
        }
        Ok(())
    }
}

/// Search resolutions for the benchmark policies and the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Candidate positions of the discrete placement benchmark.
    pub grid_points: usize,
    /// Offsets swept by the equal-spacing benchmark.
    pub offset_steps: usize,
    pub oracle_beta_points: usize,
    pub oracle_power_points: usize,
    pub oracle_position_points: usize,
    /// Evaluation episodes per seed.
    pub eval_episodes: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            grid_points: 8,
            offset_steps: 21,
            oracle_beta_points: 11,
            oracle_power_points: 11,
            oracle_position_points: 8,
            eval_episodes: 10,
        }
    }
}

/// Run metadata: seeds, training length, and output placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub output_dir: String,
    pub experiment_id: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![0],
            episodes: 2000,
            output_dir: "runs".to_string(),
            experiment_id: "default".to_string(),
        }
    }
}

/// The complete, validated configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub eh: EhConfig,
    pub battery: BatteryConfig,
    pub uncertainty: UncertaintyParams,
    pub agent: AgentConfig,
    pub benchmark: BenchmarkConfig,
    pub run: RunConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfigDoc {
    #[serde(default)]
    system: SystemConfigDoc,
    #[serde(default)]
    eh: EhConfig,
    #[serde(default)]
    battery: BatteryConfig,
    #[serde(default)]
    uncertainty: UncertaintyParams,
    #[serde(default)]
    agent: AgentConfig,
    #[serde(default)]
    benchmark: BenchmarkConfig,
    #[serde(default)]
    run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_json_str("{}").expect("default configuration is valid")
    }
}

/// Pull the offending key out of a serde message such as
/// "unknown field `foo`, expected one of ...".
fn key_from_serde_message(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ExperimentConfigDoc = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            Error::config(key_from_serde_message(&message), message)
        })?;
        let cfg = ExperimentConfig {
            system: doc.system.resolve()?,
            eh: doc.eh,
            battery: doc.battery,
            uncertainty: doc.uncertainty,
            agent: doc.agent,
            benchmark: doc.benchmark,
            run: doc.run,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Cross-field validation of every section.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let k = self.system.num_users;
        self.eh
            .sensitivity_a
            .check("eh.sensitivity_a", k, |v| v > 0.0, "must be positive")?;
        self.eh
            .threshold_b
            .check("eh.threshold_b", k, |v| v >= 0.0, "must be non-negative")?;
        self.eh
            .saturation_iota
            .check("eh.saturation_iota", k, |v| v > 0.0, "must be positive")?;
        self.battery
            .capacity_j
            .check("battery.capacity_j", k, |v| v > 0.0, "must be positive")?;
        self.battery.storage_efficiency.check(
            "battery.storage_efficiency",
            k,
            |v| v > 0.0 && v <= 1.0,
            "must lie in (0, 1]",
        )?;
        self.battery.fixed_circuit_energy_j.check(
            "battery.fixed_circuit_energy_j",
            k,
            |v| v >= 0.0,
            "must be non-negative",
        )?;
        non_negative("uncertainty.battery_bound_j", self.uncertainty.battery_bound_j)?;
        non_negative("uncertainty.location_bound_m", self.uncertainty.location_bound_m)?;
        non_negative("uncertainty.location_sigma_m", self.uncertainty.location_sigma_m)?;
        self.agent.validate()?;
        let b = &self.benchmark;
        for (key, value) in [
            ("benchmark.grid_points", b.grid_points),
            ("benchmark.offset_steps", b.offset_steps),
            ("benchmark.oracle_beta_points", b.oracle_beta_points),
            ("benchmark.oracle_power_points", b.oracle_power_points),
            ("benchmark.oracle_position_points", b.oracle_position_points),
            ("benchmark.eval_episodes", b.eval_episodes),
        ] {
            if value == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        Ok(())
    }

    /// Deterministic JSON rendering of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with a different user or antenna count; per-user lists are
    /// truncated or padded with their last value.
    pub fn with_counts(&self, num_users: usize, num_pas: usize) -> Result<Self> {
        fn resize(value: &PerUser, k: usize) -> PerUser {
            match value {
                PerUser::Shared(v) => PerUser::Shared(*v),
                PerUser::Each(values) => {
                    let last = *values.last().expect("validated non-empty");
                    PerUser::Each((0..k).map(|i| values.get(i).copied().unwrap_or(last)).collect())
                }
            }
        }
        let mut cfg = self.clone();
        cfg.system.num_users = num_users;
        cfg.system.num_pas = num_pas;
        for v in [
            &mut cfg.eh.sensitivity_a,
            &mut cfg.eh.threshold_b,
            &mut cfg.eh.saturation_iota,
            &mut cfg.battery.capacity_j,
            &mut cfg.battery.storage_efficiency,
            &mut cfg.battery.fixed_circuit_energy_j,
        ] {
            *v = resize(v, num_users);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_derived_values() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.system.waveguide_length_m, cfg.system.region_x_m);
        assert!((cfg.system.noise_power_w - 1e-12).abs() < 1e-24);
        let half_lambda = SPEED_OF_LIGHT / 28e9 / 2.0;
        assert_eq!(cfg.system.min_spacing_m, half_lambda);
        assert_eq!(cfg.system.num_users, 3);
        assert_eq!(cfg.system.num_pas, 3);
        assert_eq!(cfg.agent.batch_size, 64);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_json_str(r#"{"system": {"num_userz": 2}}"#).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "num_userz"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = ExperimentConfig::from_json_str(r#"{"physics": {}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dbm_and_watts_are_exclusive() {
        let err = ExperimentConfig::from_json_str(
            r#"{"system": {"noise_power_w": 1e-12, "noise_power_dbm": -90}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "system.noise_power_dbm"));
        let cfg = ExperimentConfig::from_json_str(r#"{"system": {"noise_power_dbm": -60}}"#).unwrap();
        assert!((cfg.system.noise_power_w - 1e-9).abs() < 1e-21);
    }

    #[test]
    fn infeasible_spacing_is_a_config_error() {
        let err = ExperimentConfig::from_json_str(
            r#"{"system": {"num_pas": 4, "min_spacing_m": 20.0}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "system.min_spacing_m"));
    }

    #[test]
    fn per_user_lists_must_match_user_count() {
        let err = ExperimentConfig::from_json_str(
            r#"{"battery": {"storage_efficiency": [0.9, 0.8]}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "battery.storage_efficiency"));
        let cfg = ExperimentConfig::from_json_str(
            r#"{"battery": {"storage_efficiency": [0.9, 0.8, 0.7]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.battery.storage_efficiency.get(2), 0.7);
    }

    #[test]
    fn canonical_form_round_trips_with_same_hash() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"system": {"num_users": 2, "noise_power_dbm": -85}, "run": {"seeds": [3, 4]}}"#,
        )
        .unwrap();
        let again = ExperimentConfig::from_json_str(&cfg.canonical_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn agent_invariants() {
        assert!(ExperimentConfig::from_json_str(r#"{"agent": {"discount": 1.0}}"#).is_err());
        assert!(ExperimentConfig::from_json_str(
            r#"{"agent": {"batch_size": 128, "buffer_capacity": 64}}"#
        )
        .is_err());
    }

    #[test]
    fn with_counts_resizes_lists() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"eh": {"sensitivity_a": [100, 120, 150]}}"#,
        )
        .unwrap();
        let small = cfg.with_counts(1, 2).unwrap();
        assert_eq!(small.eh.sensitivity_a, PerUser::Each(vec![100.0]));
        let big = cfg.with_counts(4, 1).unwrap();
        assert_eq!(big.eh.sensitivity_a.get(3), 150.0);
    }
}
