//! Tri-hybrid beamforming for radiation-center reconfigurable antenna arrays.
//!
//! The crate optimizes three cascaded beamformers for a multiuser mmWave
//! downlink: a digital precoder `F_BB`, an analog phase-shifter network
//! `F_RF` (fully or partially connected), and an electromagnetic stage that
//! picks `N_T` radiation centers out of `N_EM` candidate points.
//!
//! * [`system_model`] holds the array geometry, channel generation and the
//!   selection feasibility rules.
//! * [`metrics`] evaluates SINR, spectral efficiency (SE), power and energy
//!   efficiency (EE).
//! * [`hbf_se`] maximizes SE at a fixed selection (WMMSE with a penalty on
//!   `F = F_RF F_BB`).
//! * [`ee_solvers`] maximizes EE at a fixed selection with two
//!   fractional-programming schemes.
//! * [`rc_cod`] searches over selections by coordinate descent around any of
//!   the fixed-selection solvers.
//! * [`oracles`] and [`harness`] provide brute-force references and the
//!   Monte Carlo experiment driver.

pub mod ee_solvers;
pub mod error;
pub mod harness;
pub mod hbf_se;
pub mod metrics;
pub mod numerics;
pub mod oracles;
mod pdd;
pub mod rc_cod;
pub mod report;
pub mod system_model;

pub use error::{Error, Result};
pub use metrics::{BeamformerSet, PowerModel};
pub use report::{SolveReport, SolveStatus};
pub use system_model::{AnalogStructure, ExtendedChannel, RcSelection, SystemConfig};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Converts a power level in dBm to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Converts linear milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}
