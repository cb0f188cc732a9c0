//! The slotted decision process: state with estimation errors, action
//! decoding onto the feasible set, slot dynamics, and the reward.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SystemConfig};
use crate::energy::{self, BatteryParams, EhParams};
use crate::error::{Error, Result};
use crate::geometry::{self, PaLayout, UserPosition};
use crate::noma::{self, Access, RateReport};
use crate::rng::{derive_seed, SimRng};

/// Everything the environment needs to simulate one network: the resolved
/// configuration, per-user hardware parameters, and the access scheme.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: Arc<ExperimentConfig>,
    pub eh: Vec<EhParams>,
    pub battery: Vec<BatteryParams>,
    pub access: Access,
}

impl Scenario {
    pub fn new(cfg: ExperimentConfig, access: Access) -> Self {
        let k = cfg.system.num_users;
        let eh = (0..k).map(|u| cfg.eh_params(u)).collect();
        let battery = (0..k).map(|u| cfg.battery_params(u)).collect();
        Scenario {
            cfg: Arc::new(cfg),
            eh,
            battery,
            access,
        }
    }

    pub fn system(&self) -> &SystemConfig {
        &self.cfg.system
    }

    pub fn num_users(&self) -> usize {
        self.cfg.system.num_users
    }

    pub fn num_pas(&self) -> usize {
        self.cfg.system.num_pas
    }

    /// Transmit airtime of one user in a slot with ratio `beta`.
    fn airtime_s(&self, beta: f64) -> f64 {
        let uplink = (1.0 - beta) * self.cfg.system.slot_duration_s;
        match self.access {
            Access::Noma => uplink,
            Access::Oma => uplink / self.num_users() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub slot_index: usize,
    pub true_batteries_j: Vec<f64>,
    pub est_batteries_j: Vec<f64>,
    pub true_positions: Vec<UserPosition>,
    pub est_positions: Vec<UserPosition>,
}

impl EnvState {
    pub fn true_view(&self) -> SlotView<'_> {
        SlotView {
            positions: &self.true_positions,
            batteries_j: &self.true_batteries_j,
        }
    }

    pub fn estimated_view(&self) -> SlotView<'_> {
        SlotView {
            positions: &self.est_positions,
            batteries_j: &self.est_batteries_j,
        }
    }

    /// Normalized agent observation: estimated batteries over capacity,
    /// then `(x / r_x, y / r_y)` of every estimated position.
    pub fn observation(&self, sc: &Scenario) -> Vec<f64> {
        let sys = sc.system();
        let mut obs = Vec::with_capacity(3 * self.est_batteries_j.len());
        obs.extend(
            self.est_batteries_j
                .iter()
                .zip(&sc.battery)
                .map(|(b, p)| b / p.capacity_j),
        );
        for pos in &self.est_positions {
            obs.push(pos.x_m / sys.region_x_m);
            obs.push(pos.y_m / sys.region_y_m);
        }
        obs
    }
}

/// One notion of where users are and how much energy they hold.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub positions: &'a [UserPosition],
    pub batteries_j: &'a [f64],
}

/// A physical action before battery limits are enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub powers_w: Vec<f64>,
    pub layout: PaLayout,
    pub beta: f64,
}

/// A decoded action satisfying range, spacing, and causality constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    /// Normalized action in `[-1, 1]`: K powers, N positions, then the ratio.
    pub raw: Vec<f64>,
    pub decoded_powers_w: Vec<f64>,
    pub decoded_layout: PaLayout,
    pub decoded_beta: f64,
    /// Users whose requested power exceeded what their energy allows.
    pub power_clipped: Vec<bool>,
}

/// Channel and energy quantities of one slot under one layout and ratio.
#[derive(Debug, Clone)]
pub struct SlotPhysics {
    pub gains: Vec<Complex64>,
    pub harvested_j: Vec<f64>,
    pub power_caps_w: Vec<f64>,
}

pub fn slot_physics(view: SlotView<'_>, layout: &PaLayout, beta: f64, sc: &Scenario) -> Result<SlotPhysics> {
    let sys = sc.system();
    let gains = geometry::composite_gains(view.positions, layout, sys)?;
    let mut harvested_j = Vec::with_capacity(gains.len());
    let mut power_caps_w = Vec::with_capacity(gains.len());
    let airtime = sc.airtime_s(beta);
    for (k, h) in gains.iter().enumerate() {
        let rx = sys.bs_wpt_power_w * h.norm_sqr();
        let e = energy::harvested_energy(beta, sys.slot_duration_s, rx, &sc.eh[k])?;
        let b = &sc.battery[k];
        let cap = if beta >= 1.0 {
            0.0
        } else {
            energy::power_cap_for_airtime(
                view.batteries_j[k],
                b.storage_efficiency,
                e,
                airtime,
                b,
                sys.max_tx_power_w,
            )
        };
        harvested_j.push(e);
        power_caps_w.push(cap);
    }
    Ok(SlotPhysics {
        gains,
        harvested_j,
        power_caps_w,
    })
}

/// Rates and objective of one slot for powers already known to be feasible.
#[derive(Debug, Clone)]
pub struct SlotScore {
    pub rates: RateReport,
    pub ee: f64,
    pub meets_rate_target: bool,
}

pub fn score_slot(powers_w: &[f64], beta: f64, gains: &[Complex64], sc: &Scenario) -> Result<SlotScore> {
    let sys = sc.system();
    let rates = noma::rates(sc.access, powers_w, gains, sys.noise_power_w, beta)?;
    let ee = noma::ee_value(&rates, powers_w, sys.fixed_circuit_power_w);
    let meets_rate_target = rates
        .per_user_rate_bpshz
        .iter()
        .all(|&r| r >= sys.min_rate_bpshz);
    Ok(SlotScore {
        rates,
        ee,
        meets_rate_target,
    })
}

/// Reward of a slot: the penalty if any user misses the rate target,
/// otherwise the energy efficiency.
pub fn reward_of(score: &SlotScore, sys: &SystemConfig) -> f64 {
    if score.meets_rate_target {
        score.ee
    } else {
        sys.penalty_reward
    }
}

/// Normalized encoding of a physical action; the inverse of the affine
/// maps in [`decode_action`].
pub fn encode_action(powers_w: &[f64], layout: &PaLayout, beta: f64, sys: &SystemConfig) -> Vec<f64> {
    let mut raw = Vec::with_capacity(powers_w.len() + layout.len() + 1);
    raw.extend(powers_w.iter().map(|p| 2.0 * p / sys.max_tx_power_w - 1.0));
    raw.extend(
        layout
            .positions()
            .iter()
            .map(|x| 2.0 * x / sys.waveguide_length_m - 1.0),
    );
    raw.push(2.0 * beta - 1.0);
    raw
}

/// Map a normalized action onto physical values. Powers are clipped to
/// what the true battery plus this slot's true harvest can pay for.
pub fn decode_action(raw: &[f64], state: &EnvState, sc: &Scenario) -> Result<ActionVector> {
    let sys = sc.system();
    let (k, n) = (sys.num_users, sys.num_pas);
    if raw.len() != k + n + 1 {
        return Err(Error::usage(format!(
            "action has {} entries, expected {}",
            raw.len(),
            k + n + 1
        )));
    }
    if raw.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("action contains NaN"));
    }
    let raw: Vec<f64> = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let unit = |v: f64| (v + 1.0) / 2.0;
    let beta = unit(raw[k + n]);
    let positions: Vec<f64> = raw[k..k + n]
        .iter()
        .map(|&v| unit(v) * sys.waveguide_length_m)
        .collect();
    let layout = geometry::project_layout(&positions, sys)?;
    let powers_w = raw[..k].iter().map(|&v| unit(v) * sys.max_tx_power_w).collect();
    let mut action = enforce_limits(
        &ActionRequest {
            powers_w,
            layout,
            beta,
        },
        state,
        sc,
    )?;
    action.raw = raw;
    Ok(action)
}

/// Clip a physical request to the energy available at the true state.
pub fn enforce_limits(request: &ActionRequest, state: &EnvState, sc: &Scenario) -> Result<ActionVector> {
    let sys = sc.system();
    if request.powers_w.len() != sys.num_users {
        return Err(Error::usage("power vector length does not match the user count"));
    }
    if !(0.0..=1.0).contains(&request.beta) {
        return Err(Error::domain(format!("ratio {} outside [0, 1]", request.beta)));
    }
    let physics = slot_physics(state.true_view(), &request.layout, request.beta, sc)?;
    let mut powers = Vec::with_capacity(sys.num_users);
    let mut clipped = Vec::with_capacity(sys.num_users);
    for (p, cap) in request.powers_w.iter().zip(&physics.power_caps_w) {
        let p = p.clamp(0.0, sys.max_tx_power_w);
        clipped.push(p > *cap);
        powers.push(p.min(*cap));
    }
    Ok(ActionVector {
        raw: encode_action(&request.powers_w, &request.layout, request.beta, sys),
        decoded_powers_w: powers,
        decoded_layout: request.layout.clone(),
        decoded_beta: request.beta,
        power_clipped: clipped,
    })
}

/// Battery estimate: uniform error within `bound`, clipped to the cell.
pub fn perturb_battery<R: Rng + ?Sized>(true_j: f64, bound: f64, capacity_j: f64, rng: &mut R) -> f64 {
    if bound <= 0.0 {
        return true_j;
    }
    (true_j + rng.random_range(-bound..=bound)).clamp(0.0, capacity_j)
}

/// Location estimate: isotropic Gaussian error with per-axis std `sigma`,
/// conditioned on lying within `bound`, then clipped to the region.
///
/// The radius is drawn from the truncated Rayleigh law by inversion, which
/// has the same distribution as redrawing until the bound is met.
pub fn perturb_location<R: Rng + ?Sized>(
    true_pos: UserPosition,
    sigma: f64,
    bound: f64,
    sys: &SystemConfig,
    rng: &mut R,
) -> UserPosition {
    let error = location_error(sigma, bound, rng);
    UserPosition::new(true_pos.x_m + error[0], true_pos.y_m + error[1]).clamp_to_region(sys)
}

/// The 2-D error vector used by [`perturb_location`], before clipping.
pub fn location_error<R: Rng + ?Sized>(sigma: f64, bound: f64, rng: &mut R) -> [f64; 2] {
    if sigma <= 0.0 || bound <= 0.0 {
        return [0.0, 0.0];
    }
    let u: f64 = rng.random();
    let theta = 2.0 * PI * rng.random::<f64>();
    let c = bound * bound / (2.0 * sigma * sigma);
    let r = (sigma * (-2.0 * (u * (-c).exp_m1()).ln_1p()).sqrt()).min(bound);
    [r * theta.cos(), r * theta.sin()]
}

/// Per-slot measurements reported alongside the reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub powers_w: Vec<f64>,
    pub layout_m: Vec<f64>,
    pub beta: f64,
    pub per_user_rate_bpshz: Vec<f64>,
    pub sum_rate_bpshz: f64,
    pub ee_bpshz_per_w: f64,
    pub harvested_j: Vec<f64>,
    pub consumed_j: Vec<f64>,
    /// Stored plus usable harvested energy before consumption.
    pub available_j: Vec<f64>,
    pub batteries_after_j: Vec<f64>,
    /// Some user missed the rate target.
    pub rate_violation: bool,
    /// A requested power was clipped by the energy budget.
    pub power_clipped: bool,
    /// Users whose energy could not cover the fixed circuit cost.
    pub outage: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: EnvState,
    pub diagnostics: StepDiagnostics,
    pub done: bool,
}

/// A single network simulated slot by slot.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    state: EnvState,
    rng: SimRng,
}

impl Env {
    /// A fresh environment already reset with `seed`.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let rng = SimRng::new(derive_seed(seed, "env"));
        let state = EnvState {
            slot_index: 0,
            true_batteries_j: vec![],
            est_batteries_j: vec![],
            true_positions: vec![],
            est_positions: vec![],
        };
        let mut env = Env {
            scenario,
            state,
            rng,
        };
        env.reset(seed);
        env
    }

    /// Continue from a given state; estimates drawn later use `seed`.
    pub fn from_state(scenario: Scenario, state: EnvState, seed: u64) -> Self {
        Env {
            scenario,
            state,
            rng: SimRng::new(derive_seed(seed, "env")),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.slot_index >= self.scenario.system().episode_length
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation(&self.scenario)
    }

    /// Draw a new episode: uniform batteries and positions, then estimates.
    pub fn reset(&mut self, seed: u64) -> &EnvState {
        self.rng = SimRng::new(derive_seed(seed, "env"));
        let sys = self.scenario.system().clone();
        let k = sys.num_users;
        let rng = &mut self.rng;
        let true_batteries_j: Vec<f64> = self
            .scenario
            .battery
            .iter()
            .map(|b| rng.random_range(0.0..=b.capacity_j))
            .collect();
        let half_y = sys.region_y_m / 2.0;
        let true_positions: Vec<UserPosition> = (0..k)
            .map(|_| {
                UserPosition::new(
                    rng.random_range(0.0..=sys.region_x_m),
                    rng.random_range(-half_y..=half_y),
                )
            })
            .collect();
        self.state = EnvState {
            slot_index: 0,
            est_batteries_j: true_batteries_j.clone(),
            true_batteries_j,
            est_positions: true_positions.clone(),
            true_positions,
        };
        self.refresh_estimates();
        &self.state
    }

    fn refresh_estimates(&mut self) {
        let unc = self.scenario.cfg.uncertainty.clone();
        let sys = &self.scenario.cfg.system;
        let state = &mut self.state;
        for k in 0..state.true_batteries_j.len() {
            state.est_batteries_j[k] = perturb_battery(
                state.true_batteries_j[k],
                unc.battery_bound_j,
                self.scenario.battery[k].capacity_j,
                &mut self.rng,
            );
            state.est_positions[k] = perturb_location(
                state.true_positions[k],
                unc.location_sigma_m,
                unc.location_bound_m,
                sys,
                &mut self.rng,
            );
        }
    }

    pub fn decode(&self, raw: &[f64]) -> Result<ActionVector> {
        decode_action(raw, &self.state, &self.scenario)
    }

    /// Apply a normalized action.
    pub fn step(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        let action = self.decode(raw)?;
        self.step_decoded(&action)
    }

    /// Apply a physical action; powers are still clipped to the budget.
    pub fn step_request(&mut self, request: &ActionRequest) -> Result<StepOutcome> {
        let action = enforce_limits(request, &self.state, &self.scenario)?;
        self.step_decoded(&action)
    }

    pub fn step_decoded(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::usage("episode already terminated; call reset"));
        }
        let sc = &self.scenario;
        let sys = sc.system();
        let beta = action.decoded_beta;
        let physics = slot_physics(self.state.true_view(), &action.decoded_layout, beta, sc)?;
        let powers = &action.decoded_powers_w;
        let score = score_slot(powers, beta, &physics.gains, sc)?;
        let reward = reward_of(&score, sys);

        let airtime = sc.airtime_s(beta);
        let k = sys.num_users;
        let mut consumed_j = Vec::with_capacity(k);
        let mut available_j = Vec::with_capacity(k);
        let mut outage = Vec::with_capacity(k);
        let mut batteries_after_j = Vec::with_capacity(k);
        for u in 0..k {
            let b = &sc.battery[u];
            let stored = self.state.true_batteries_j[u];
            let available = stored + b.storage_efficiency * physics.harvested_j[u];
            let mut used = airtime * powers[u] + b.fixed_circuit_energy_j;
            // Not enough energy to keep the circuit up: it drains what is left.
            let starved = available < b.fixed_circuit_energy_j;
            if starved {
                used = available;
            }
            let next = energy::battery_update(stored, b.storage_efficiency, physics.harvested_j[u], used, b);
            consumed_j.push(used);
            available_j.push(available);
            outage.push(starved);
            batteries_after_j.push(next);
        }

        let diagnostics = StepDiagnostics {
            powers_w: powers.clone(),
            layout_m: action.decoded_layout.positions().to_vec(),
            beta,
            per_user_rate_bpshz: score.rates.per_user_rate_bpshz.clone(),
            sum_rate_bpshz: score.rates.sum_rate_bpshz,
            ee_bpshz_per_w: score.ee,
            harvested_j: physics.harvested_j,
            consumed_j,
            available_j,
            batteries_after_j: batteries_after_j.clone(),
            rate_violation: !score.meets_rate_target,
            power_clipped: action.power_clipped.iter().any(|&c| c),
            outage,
        };

        self.state.true_batteries_j = batteries_after_j;
        self.state.slot_index += 1;
        self.refresh_estimates();
        Ok(StepOutcome {
            reward,
            next_state: self.state.clone(),
            diagnostics,
            done: self.is_done(),
        })
    }
}

/// Per-slot record of an episode, written as CSV.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    rows: Vec<(usize, f64, StepDiagnostics)>,
}

impl EpisodeTrace {
    pub fn push(&mut self, slot: usize, outcome: &StepOutcome) {
        self.rows.push((slot, outcome.reward, outcome.diagnostics.clone()));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, num_users: usize, num_pas: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "beta".to_string()];
        header.extend((1..=num_users).map(|k| format!("p_{k}")));
        header.extend((1..=num_pas).map(|n| format!("x_{n}")));
        header.extend((1..=num_users).map(|k| format!("rate_{k}")));
        header.push("reward".to_string());
        header.extend((1..=num_users).map(|k| format!("battery_{k}")));
        w.write_record(&header)?;
        for (t, reward, d) in &self.rows {
            let mut row = vec![t.to_string(), d.beta.to_string()];
            row.extend(d.powers_w.iter().map(f64::to_string));
            row.extend(d.layout_m.iter().map(f64::to_string));
            row.extend(d.per_user_rate_bpshz.iter().map(f64::to_string));
            row.push(reward.to_string());
            row.extend(d.batteries_after_j.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}
