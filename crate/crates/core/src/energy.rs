//! Nonlinear energy harvesting, energy consumption, and battery dynamics.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Sigmoidal rectifier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhParams {
    /// Steepness of the charging curve.
    pub sensitivity_a: f64,
    /// Input power at the sigmoid midpoint, W.
    pub threshold_b: f64,
    /// Saturation power, W.
    pub saturation_iota: f64,
}

impl EhParams {
    /// Sigmoid output at zero input, as a fraction of saturation.
    pub fn omega(&self) -> f64 {
        1.0 / (1.0 + (self.sensitivity_a * self.threshold_b).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity_j: f64,
    pub storage_efficiency: f64,
    pub fixed_circuit_energy_j: f64,
}

impl ExperimentConfig {
    pub fn eh_params(&self, user: usize) -> EhParams {
        EhParams {
            sensitivity_a: self.eh.sensitivity_a.get(user),
            threshold_b: self.eh.threshold_b.get(user),
            saturation_iota: self.eh.saturation_iota.get(user),
        }
    }

    pub fn battery_params(&self, user: usize) -> BatteryParams {
        BatteryParams {
            capacity_j: self.battery.capacity_j.get(user),
            storage_efficiency: self.battery.storage_efficiency.get(user),
            fixed_circuit_energy_j: self.battery.fixed_circuit_energy_j.get(user),
        }
    }
}

fn check_ratio(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::domain(format!("time-switching ratio {beta} outside [0, 1]")))
    }
}

/// Energy collected during the harvesting fraction `beta` of a slot of
/// `ts` seconds when `rx_power_w` reaches the rectifier.
pub fn harvested_energy(beta: f64, ts: f64, rx_power_w: f64, eh: &EhParams) -> Result<f64> {
    check_ratio(beta)?;
    if !(ts >= 0.0) || !(rx_power_w >= 0.0) {
        return Err(Error::domain(format!(
            "slot length {ts} and received power {rx_power_w} must be non-negative"
        )));
    }
    let a = eh.sensitivity_a;
    let b = eh.threshold_b;
    let iota = eh.saturation_iota;
    // Both terms share the same expression shape so zero input cancels exactly.
    let upsilon = iota / (1.0 + (-a * (rx_power_w - b)).exp());
    let floor = iota / (1.0 + (a * b).exp());
    let omega = eh.omega();
    let energy = beta * ts * (upsilon - floor) / (1.0 - omega);
    Ok(energy.clamp(0.0, beta * ts * iota))
}

/// Transmit-phase plus fixed circuit energy of one slot.
pub fn consumed_energy(beta: f64, ts: f64, tx_power_w: f64, battery: &BatteryParams) -> Result<f64> {
    check_ratio(beta)?;
    if !(tx_power_w >= 0.0) {
        return Err(Error::domain(format!("transmit power {tx_power_w} is negative")));
    }
    Ok((1.0 - beta) * ts * tx_power_w + battery.fixed_circuit_energy_j)
}

/// Largest transmit power the stored plus harvested energy can pay for,
/// clipped to the hardware cap `p_max`. With no transmit phase (`beta = 1`)
/// the budget does not bound power and `p_max` is returned whenever the
/// circuit energy is covered.
pub fn feasible_power_cap(
    battery_j: f64,
    eta: f64,
    harvested_j: f64,
    beta: f64,
    ts: f64,
    battery: &BatteryParams,
    p_max: f64,
) -> f64 {
    power_cap_for_airtime(battery_j, eta, harvested_j, (1.0 - beta) * ts, battery, p_max)
}

/// [`feasible_power_cap`] for an arbitrary transmit airtime in seconds.
pub(crate) fn power_cap_for_airtime(
    battery_j: f64,
    eta: f64,
    harvested_j: f64,
    airtime_s: f64,
    battery: &BatteryParams,
    p_max: f64,
) -> f64 {
    let spare = battery_j + eta * harvested_j - battery.fixed_circuit_energy_j;
    if !(spare > 0.0) {
        return 0.0;
    }
    if airtime_s <= 0.0 {
        return p_max;
    }
    (spare / airtime_s).min(p_max)
}

/// Battery level at the start of the next slot.
pub fn battery_update(
    battery_j: f64,
    eta: f64,
    harvested_j: f64,
    consumed_j: f64,
    battery: &BatteryParams,
) -> f64 {
    (battery_j + eta * harvested_j - consumed_j).clamp(0.0, battery.capacity_j)
}
