//! Positions, line-of-sight and waveguide channel coefficients, and the
//! feasibility projection of antenna layouts.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Slack used when checking spacing and range constraints of a layout.
pub const LAYOUT_TOLERANCE_M: f64 = 1e-9;

/// A user device on the ground plane (z = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPosition {
    pub x_m: f64,
    pub y_m: f64,
}

impl UserPosition {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        UserPosition { x_m, y_m }
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x_m, self.y_m, 0.0]
    }

    /// Clip into the service rectangle `[0, r_x] x [-r_y/2, r_y/2]`.
    pub fn clamp_to_region(self, cfg: &SystemConfig) -> Self {
        let half_y = cfg.region_y_m / 2.0;
        UserPosition {
            x_m: self.x_m.clamp(0.0, cfg.region_x_m),
            y_m: self.y_m.clamp(-half_y, half_y),
        }
    }

    pub fn in_region(&self, cfg: &SystemConfig) -> bool {
        let half_y = cfg.region_y_m / 2.0;
        (0.0..=cfg.region_x_m).contains(&self.x_m) && (-half_y..=half_y).contains(&self.y_m)
    }

    pub fn distance_to(&self, other: &UserPosition) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

/// Activation points of the pinching antennas, ordered from the feed outwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaLayout {
    positions_m: Vec<f64>,
}

impl PaLayout {
    /// Accept `positions` only if they already satisfy range and spacing.
    pub fn new(positions: Vec<f64>, cfg: &SystemConfig) -> Result<Self> {
        if positions.len() != cfg.num_pas {
            return Err(Error::domain(format!(
                "layout has {} positions, expected {}",
                positions.len(),
                cfg.num_pas
            )));
        }
        if !is_feasible(&positions, cfg) {
            return Err(Error::domain(format!("infeasible layout {positions:?}")));
        }
        Ok(PaLayout { positions_m: positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions_m
    }

    pub fn len(&self) -> usize {
        self.positions_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_m.is_empty()
    }

    /// Coordinates of antenna `index` (0-based) in space.
    pub fn antenna_xyz(&self, index: usize, cfg: &SystemConfig) -> [f64; 3] {
        [self.positions_m[index], 0.0, cfg.pa_height_m]
    }
}

fn is_feasible(positions: &[f64], cfg: &SystemConfig) -> bool {
    let length = cfg.waveguide_length_m;
    let tol = LAYOUT_TOLERANCE_M * length.max(1.0);
    positions
        .iter()
        .all(|&x| x.is_finite() && x >= -tol && x <= length + tol)
        && positions
            .windows(2)
            .all(|w| w[1] - w[0] >= cfg.min_spacing_m - tol && w[1] > w[0])
}

/// Free-space and guided wavelengths, in meters.
pub fn wavelengths(cfg: &SystemConfig) -> (f64, f64) {
    let lambda = SPEED_OF_LIGHT / cfg.carrier_frequency_hz;
    (lambda, lambda / cfg.effective_refractive_index)
}

fn euclidean(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Line-of-sight coefficient between a user and a radiating point.
pub fn free_space_coeff(user: &UserPosition, pa_xyz: [f64; 3], lambda_m: f64) -> Result<Complex64> {
    let d = euclidean(user.xyz(), pa_xyz);
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::domain(format!("user and antenna distance {d} is not positive")));
    }
    Ok(Complex64::from_polar(
        lambda_m / (4.0 * PI * d),
        -2.0 * PI * d / lambda_m,
    ))
}

/// Share of the guided power coupled out by antenna `antenna_index` (1-based).
pub fn power_split(antenna_index: usize, delta: f64) -> f64 {
    let d2 = delta * delta;
    d2 * (1.0 - d2).powi(antenna_index as i32 - 1)
}

/// In-waveguide power loss factor over `path_m` meters.
pub fn waveguide_loss(path_m: f64, attenuation_db_per_m: f64) -> f64 {
    10f64.powf(-attenuation_db_per_m * path_m / 10.0)
}

/// Coupling, attenuation, and guided phase of antenna `antenna_index`
/// (1-based) activated at `x_n`.
pub fn waveguide_coeff(antenna_index: usize, x_n: f64, cfg: &SystemConfig) -> Result<Complex64> {
    if antenna_index == 0 || antenna_index > cfg.num_pas {
        return Err(Error::domain(format!(
            "antenna index {antenna_index} outside 1..={}",
            cfg.num_pas
        )));
    }
    let tol = LAYOUT_TOLERANCE_M * cfg.waveguide_length_m.max(1.0);
    if !(x_n >= -tol && x_n <= cfg.waveguide_length_m + tol) {
        return Err(Error::domain(format!("position {x_n} is off the waveguide")));
    }
    let (_, lambda_g) = wavelengths(cfg);
    let path = (cfg.feed_position_m - x_n).abs();
    let psi = power_split(antenna_index, cfg.coupling_delta);
    let varsigma = waveguide_loss(path, cfg.attenuation_db_per_m);
    Ok(Complex64::from_polar(
        (psi * varsigma).sqrt(),
        -2.0 * PI * path / lambda_g,
    ))
}

/// End-to-end coefficient between one antenna and one user.
pub fn antenna_gain(
    user: &UserPosition,
    antenna_index: usize,
    x_n: f64,
    cfg: &SystemConfig,
) -> Result<Complex64> {
    let (lambda, _) = wavelengths(cfg);
    let fs = free_space_coeff(user, [x_n, 0.0, cfg.pa_height_m], lambda)?;
    Ok(fs * waveguide_coeff(antenna_index, x_n, cfg)?)
}

/// Coherent sum of every antenna's contribution at `user`.
pub fn composite_gain(user: &UserPosition, layout: &PaLayout, cfg: &SystemConfig) -> Result<Complex64> {
    layout
        .positions()
        .iter()
        .enumerate()
        .try_fold(Complex64::new(0.0, 0.0), |acc, (i, &x)| {
            Ok(acc + antenna_gain(user, i + 1, x, cfg)?)
        })
}

/// Composite gains of several users for one layout.
pub fn composite_gains(
    users: &[UserPosition],
    layout: &PaLayout,
    cfg: &SystemConfig,
) -> Result<Vec<Complex64>> {
    users.iter().map(|u| composite_gain(u, layout, cfg)).collect()
}

/// Map arbitrary positions onto the nearest-by-construction feasible layout:
/// sort, push right to honour the spacing, then pull left from the far end.
/// Feasible inputs come back unchanged (after sorting).
pub fn project_layout(raw_positions: &[f64], cfg: &SystemConfig) -> Result<PaLayout> {
    let n = cfg.num_pas;
    let length = cfg.waveguide_length_m;
    let d_min = cfg.min_spacing_m;
    if n as f64 * d_min > length {
        return Err(Error::config(
            "system.min_spacing_m",
            "antennas cannot fit on the waveguide",
        ));
    }
    if raw_positions.len() != n {
        return Err(Error::domain(format!(
            "expected {n} raw positions, got {}",
            raw_positions.len()
        )));
    }
    if raw_positions.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("raw layout contains NaN"));
    }
    let mut x = raw_positions.to_vec();
    x.sort_by(f64::total_cmp);
    if is_feasible(&x, cfg) {
        return Ok(PaLayout { positions_m: x });
    }
    x[0] = x[0].max(0.0);
    for i in 1..n {
        x[i] = x[i].max(x[i - 1] + d_min);
    }
    x[n - 1] = x[n - 1].min(length);
    for i in (0..n - 1).rev() {
        x[i] = x[i].min(x[i + 1] - d_min);
    }
    debug_assert!(is_feasible(&x, cfg), "projection left {x:?} infeasible");
    Ok(PaLayout { positions_m: x })
}
