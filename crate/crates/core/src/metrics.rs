//! SINR, spectral efficiency, power consumption and energy efficiency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::system_model::{AnalogStructure, SystemConfig};
use crate::{CMat, Error, Result};

/// Hardware power constants, all in mW except the PA efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    pub eta_pa: f64,
    pub p_lo: f64,
    pub p_rf: f64,
    pub p_dac: f64,
    pub p_ps: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel { eta_pa: 0.27, p_lo: 22.5, p_rf: 31.6, p_dac: 128.0, p_ps: 21.6 }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.eta_pa, self.p_lo, self.p_rf, self.p_dac, self.p_ps]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.eta_pa > 1.0 {
            return Err(Error::Config(format!("invalid power model {self:?}")));
        }
        Ok(())
    }
}

/// Number of phase shifters in the analog network.
pub fn phase_shifter_count(config: &SystemConfig) -> usize {
    match config.analog_structure {
        AnalogStructure::FullyConnected => config.n_t * config.n_rf,
        AnalogStructure::PartiallyConnected => config.n_t,
        AnalogStructure::FullyDigital => 0,
    }
}

/// RF chains that draw power; a fully digital array needs one per port.
pub fn active_rf_chains(config: &SystemConfig) -> usize {
    match config.analog_structure {
        AnalogStructure::FullyDigital => config.n_t,
        _ => config.n_rf,
    }
}

/// Transmit-independent power `P_C` (mW).
pub fn circuit_power(config: &SystemConfig, pm: &PowerModel) -> f64 {
    pm.p_lo
        + active_rf_chains(config) as f64 * (pm.p_rf + 2.0 * pm.p_dac)
        + phase_shifter_count(config) as f64 * pm.p_ps
}

/// Analog, digital and auxiliary (`F ≈ F_RF F_BB`) precoders.
///
/// For the fully digital structure `f_rf` is the `n_t x n_t` identity and
/// `f_bb` is `n_t x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub f_rf: CMat,
    pub f_bb: CMat,
    pub f_aux: CMat,
}

impl BeamformerSet {
    /// The precoder actually radiated, `F_RF F_BB`.
    pub fn precoder(&self) -> CMat {
        &self.f_rf * &self.f_bb
    }

    /// `‖F - F_RF F_BB‖_F`.
    pub fn penalty_residual(&self) -> f64 {
        (&self.f_aux - self.precoder()).norm()
    }

    /// Checks the constant-modulus and block-sparsity rules of `structure`.
    pub fn satisfies_structure(&self, structure: AnalogStructure, k: usize, tol: f64) -> bool {
        let f_rf = &self.f_rf;
        match structure {
            AnalogStructure::FullyConnected => {
                f_rf.ncols() == k && f_rf.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
            }
            AnalogStructure::PartiallyConnected => {
                if f_rf.ncols() != k || f_rf.nrows() % k != 0 {
                    return false;
                }
                let n_s = f_rf.nrows() / k;
                (0..f_rf.nrows()).all(|m| {
                    (0..k).all(|c| {
                        let z = f_rf[(m, c)];
                        if m / n_s == c {
                            (z.norm() - 1.0).abs() <= tol
                        } else {
                            z == Complex64::new(0.0, 0.0)
                        }
                    })
                })
            }
            AnalogStructure::FullyDigital => {
                f_rf.is_square() && *f_rf == CMat::identity(f_rf.nrows(), f_rf.ncols()) && self.f_bb.ncols() == k
            }
        }
    }
}

/// Per-user SINR for `h_eff` (`n_t x k`) and precoder columns (`n_t x k`).
pub fn sinr_per_user(h_eff: &CMat, precoder: &CMat, noise_power: f64) -> Result<Vec<f64>> {
    if h_eff.nrows() != precoder.nrows() || h_eff.ncols() != precoder.ncols() {
        return Err(Error::Dimension(format!(
            "channel is {}x{}, precoder is {}x{}",
            h_eff.nrows(),
            h_eff.ncols(),
            precoder.nrows(),
            precoder.ncols()
        )));
    }
    if !(noise_power > 0.0) {
        return Err(Error::Domain(format!("noise power must be positive, got {noise_power}")));
    }
    // gains[(k, i)] = h_k^H f_i
    let gains = h_eff.adjoint() * precoder;
    Ok(sinr_from_gains(&gains, noise_power))
}

pub(crate) fn sinr_from_gains(gains: &CMat, noise_power: f64) -> Vec<f64> {
    (0..gains.nrows())
        .map(|k| {
            let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
            let signal = gains[(k, k)].norm_sqr();
            signal / (total - signal + noise_power)
        })
        .collect()
}

/// `Σ_k log2(1 + γ_k)` in bits/s/Hz.
pub fn spectral_efficiency(sinrs: &[f64]) -> Result<f64> {
    if let Some(bad) = sinrs.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::Domain(format!("SINR must be non-negative, got {bad}")));
    }
    Ok(sinrs.iter().map(|g| (1.0 + g).log2()).sum())
}

/// `‖F_RF F_BB‖_F²`.
pub fn transmit_power(bf: &BeamformerSet) -> f64 {
    bf.precoder().norm_squared()
}

/// Total consumption `P_T / η_PA + P_C` (mW).
pub fn total_power(pt: f64, config: &SystemConfig, pm: &PowerModel) -> Result<f64> {
    if !(pt >= 0.0) {
        return Err(Error::Domain(format!("transmit power must be non-negative, got {pt}")));
    }
    Ok(pt / pm.eta_pa + circuit_power(config, pm))
}

/// Spectral efficiency per mW of consumed power.
pub fn energy_efficiency(se: f64, p_total: f64) -> Result<f64> {
    if !(p_total > 0.0) {
        return Err(Error::Domain(format!("total power must be positive, got {p_total}")));
    }
    Ok(se / p_total)
}

/// Final figures of merit for a beamformer set on a given channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub se: f64,
    pub pt: f64,
    pub p_total: f64,
    pub ee: f64,
}

pub fn evaluate(
    h_eff: &CMat,
    bf: &BeamformerSet,
    config: &SystemConfig,
    pm: &PowerModel,
) -> Result<Metrics> {
    let precoder = bf.precoder();
    let se = spectral_efficiency(&sinr_per_user(h_eff, &precoder, config.noise_power)?)?;
    let pt = precoder.norm_squared();
    let p_total = total_power(pt, config, pm)?;
    Ok(Metrics { se, pt, p_total, ee: energy_efficiency(se, p_total)? })
}
