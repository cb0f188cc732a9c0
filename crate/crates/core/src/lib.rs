//! Simulation and learning toolkit for wirelessly powered uplink networks
//! served by pinching antennas on a dielectric waveguide.

pub mod baselines;
pub mod config;
pub mod ddpg;
pub mod energy;
pub mod env;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod nn;
pub mod noma;
pub mod rng;

pub use config::ExperimentConfig;
pub use env::{Env, EnvState, Scenario};
pub use error::{Error, Result};
pub use noma::Access;
