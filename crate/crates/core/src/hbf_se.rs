//! Spectral-efficiency maximization at a fixed RC selection.
//!
//! The sum-rate problem is rewritten in its weighted-MMSE form and the
//! coupling `F = F_RF F_BB` is moved into a quadratic penalty with weight
//! `1 / (2μ)`. Each inner sweep updates the receive scalars `u`, the MSE
//! weights `w`, the auxiliary precoder `F`, the analog matrix `F_RF` and the
//! digital matrix `F_BB`; the outer loop shrinks `μ`.
//!
//! The precoder-structure helpers ([`init_beamformers`], [`update_f_rf`],
//! [`update_f_bb`]) are shared with the energy-efficiency solvers.

use std::f64::consts::LN_2;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::metrics::{self, BeamformerSet, PowerModel};
use crate::numerics::{self, BisectionSpec, RidgeSystem};
use crate::pdd::{self, BlockScheme, LoopControl, Normalized, PowerRepair};
use crate::report::SolveReport;
use crate::system_model::{AnalogStructure, SystemConfig};
use crate::{CMat, Error, Result};

fn unit_phase(z: Complex64) -> Complex64 {
    // arg(0) = 0, so an all-zero entry maps to 1.
    Complex64::from_polar(1.0, z.arg())
}

/// Maximum-ratio starting point: `F ∝ H`, analog phases taken from `H`, and a
/// scaled-identity digital stage, all at full power `p_max`.
pub fn init_beamformers(h_eff: &CMat, config: &SystemConfig) -> Result<BeamformerSet> {
    init_beamformers_with(h_eff, config.p_max, config.analog_structure)
}

pub(crate) fn init_beamformers_with(
    h_eff: &CMat,
    p_max: f64,
    structure: AnalogStructure,
) -> Result<BeamformerSet> {
    let norm = h_eff.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateInput("effective channel is zero or non-finite".into()));
    }
    let (n_t, k) = h_eff.shape();
    let f_aux = h_eff * Complex64::from(p_max.sqrt() / norm);
    let f_rf = match structure {
        AnalogStructure::FullyConnected => h_eff.map(unit_phase),
        AnalogStructure::PartiallyConnected => {
            check_pc_shape(n_t, k)?;
            let n_s = n_t / k;
            CMat::from_fn(n_t, k, |m, c| {
                if m / n_s == c { unit_phase(h_eff[(m, c)]) } else { Complex64::new(0.0, 0.0) }
            })
        }
        AnalogStructure::FullyDigital => {
            return Ok(BeamformerSet {
                f_rf: CMat::identity(n_t, n_t),
                f_bb: f_aux.clone(),
                f_aux,
            });
        }
    };
    let f_bb = CMat::identity(k, k) * Complex64::from(p_max.sqrt() / f_rf.norm());
    Ok(BeamformerSet { f_rf, f_bb, f_aux })
}

fn check_pc_shape(n_t: usize, k: usize) -> Result<()> {
    if k == 0 || n_t % k != 0 {
        return Err(Error::Config(format!(
            "partially connected structure needs k | n_t, got n_t = {n_t}, k = {k}"
        )));
    }
    Ok(())
}

/// Receive scalars minimizing each user's MSE:
/// `u_k = f_k^H h_k / (Σ_i |h_k^H f_i|² + σ²)`.
pub fn update_u(h_eff: &CMat, f_aux: &CMat, noise_power: f64) -> Vec<Complex64> {
    let gains = h_eff.adjoint() * f_aux;
    (0..gains.nrows())
        .map(|k| {
            let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
            gains[(k, k)].conj() / (total + noise_power)
        })
        .collect()
}

/// Per-user MSE `e_k` for receive scalars `u`.
pub fn mse_values(h_eff: &CMat, f_aux: &CMat, u: &[Complex64], noise_power: f64) -> Vec<f64> {
    let gains = h_eff.adjoint() * f_aux;
    (0..gains.nrows())
        .map(|k| {
            let uk = u[k];
            let interference: f64 = (0..gains.ncols())
                .filter(|&i| i != k)
                .map(|i| (uk * gains[(k, i)]).norm_sqr())
                .sum();
            let desired = Complex64::new(1.0, 0.0) - uk.conj() * gains[(k, k)].conj();
            interference + uk.norm_sqr() * noise_power + desired.norm_sqr()
        })
        .collect()
}

/// MSE weights `w_k = 1 / (e_k ln 2)`.
pub fn update_w(e_values: &[f64]) -> Result<Vec<f64>> {
    e_values
        .iter()
        .map(|&e| {
            if e > 0.0 && e.is_finite() {
                Ok(1.0 / (e * LN_2))
            } else {
                Err(Error::Domain(format!("MSE must be positive, got {e}")))
            }
        })
        .collect()
}

/// `1 / (2μ)`, zero for an infinite `μ` (penalty switched off).
pub(crate) fn penalty_weight(mu: f64) -> f64 {
    if mu.is_infinite() { 0.0 } else { 0.5 / mu }
}

#[derive(Debug, Clone)]
pub struct FUpdate {
    pub f_aux: CMat,
    /// Multiplier of the power constraint found by bisection.
    pub nu: f64,
}

/// Closed-form auxiliary-precoder update with the power multiplier found by
/// bisection.
///
/// Column `i` solves `(Σ_k w_k|u_k|² h_k h_k^H + (1/(2μ) + ν) I) f_i =
/// w_i u_i^* h_i + f̃_i / (2μ)` where `f̃ = F_RF F_BB`; stacking the columns
/// gives the block-diagonal system of the vectorized problem.
pub fn update_f_aux(
    h_eff: &CMat,
    bf: &BeamformerSet,
    u: &[Complex64],
    w: &[f64],
    mu: f64,
    p_max: f64,
) -> Result<FUpdate> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("penalty coefficient must be positive, got {mu}")));
    }
    let k = h_eff.ncols();
    let weights: Vec<f64> = (0..k).map(|i| w[i] * u[i].norm_sqr()).collect();
    let a = weighted_gram(h_eff, &weights);
    let c = penalty_weight(mu);
    let mut rhs = bf.precoder() * Complex64::from(c);
    for i in 0..k {
        let coeff = u[i].conj() * w[i];
        let mut col = rhs.column_mut(i);
        col += h_eff.column(i) * coeff;
    }
    let sol = RidgeSystem::new(&a, &rhs, c)?.solve_within_budget(p_max, &BisectionSpec::default())?;
    Ok(FUpdate { f_aux: sol.x, nu: sol.nu })
}

/// `Σ_k weights[k] h_k h_k^H`.
pub(crate) fn weighted_gram(h_eff: &CMat, weights: &[f64]) -> CMat {
    let mut scaled = h_eff.clone();
    for (k, &wk) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(wk);
    }
    scaled * h_eff.adjoint()
}

/// Analog update from `F F_BB^H`: exact per-block minimizer for the
/// partially connected network, phase-projection heuristic for the fully
/// connected one, identity for the fully digital case.
pub fn update_f_rf(f_aux: &CMat, f_bb: &CMat, structure: AnalogStructure) -> Result<CMat> {
    let (n_t, k) = f_aux.shape();
    match structure {
        AnalogStructure::FullyConnected => Ok((f_aux * f_bb.adjoint()).map(unit_phase)),
        AnalogStructure::PartiallyConnected => {
            check_pc_shape(n_t, k)?;
            let n_s = n_t / k;
            let target = f_aux * f_bb.adjoint();
            Ok(CMat::from_fn(n_t, k, |m, c| {
                if m / n_s == c { unit_phase(target[(m, c)]) } else { Complex64::new(0.0, 0.0) }
            }))
        }
        AnalogStructure::FullyDigital => Ok(CMat::identity(n_t, n_t)),
    }
}

/// Digital update: least squares for the partially connected network; for
/// the fully connected one the unitary `V U^H` from the SVD of `F^H F_RF`,
/// rescaled so `‖F_RF F_BB‖_F = ‖F‖_F`.
pub fn update_f_bb(f_aux: &CMat, f_rf: &CMat, structure: AnalogStructure) -> Result<CMat> {
    match structure {
        AnalogStructure::PartiallyConnected => {
            let gram = f_rf.adjoint() * f_rf;
            let chol = gram.cholesky().ok_or_else(|| {
                Error::Numeric("analog matrix is rank deficient in least-squares update".into())
            })?;
            Ok(chol.solve(&(f_rf.adjoint() * f_aux)))
        }
        AnalogStructure::FullyConnected => {
            let s = numerics::svd(&(f_aux.adjoint() * f_rf))?;
            let mut f_bb = &s.v * s.u.adjoint();
            let realized = (f_rf * &f_bb).norm();
            let scale = if realized > 0.0 { f_aux.norm() / realized } else { 0.0 };
            f_bb *= Complex64::from(scale);
            Ok(f_bb)
        }
        AnalogStructure::FullyDigital => Ok(f_aux.clone()),
    }
}

/// Penalized WMMSE objective
/// `Σ_k (w_k e_k - log2 w_k) + ‖F - F_RF F_BB‖_F² / (2μ)`.
pub fn penalized_objective(
    h_eff: &CMat,
    bf: &BeamformerSet,
    u: &[Complex64],
    w: &[f64],
    mu: f64,
    noise_power: f64,
) -> f64 {
    let e = mse_values(h_eff, &bf.f_aux, u, noise_power);
    let wmmse: f64 = e.iter().zip(w).map(|(&ek, &wk)| wk * ek - wk.log2()).sum();
    wmmse + penalty_weight(mu) * (&bf.f_aux - bf.precoder()).norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeOptions {
    pub mu_init: f64,
    /// Factor `c₁ ∈ (0, 1)` applied to `μ` after each outer iteration.
    pub mu_decay: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Outer loop also waits for `‖F - F_RF F_BB‖_F ≤ residual_tol √P_max`.
    pub residual_tol: f64,
    /// Rescale the final digital stage so the budget is met with equality.
    pub fill_power_budget: bool,
}

impl Default for SeOptions {
    fn default() -> Self {
        SeOptions {
            mu_init: 1.0,
            mu_decay: 0.5,
            inner_tol: 1e-4,
            max_inner: 100,
            outer_tol: 1e-4,
            max_outer: 15,
            residual_tol: 1e-4,
            fill_power_budget: true,
        }
    }
}

impl SeOptions {
    fn control(&self) -> LoopControl {
        LoopControl {
            mu_init: self.mu_init,
            mu_decay: self.mu_decay,
            inner_tol: self.inner_tol,
            max_inner: self.max_inner,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            residual_tol: self.residual_tol,
        }
    }
}

struct WmmseScheme<'a> {
    h: &'a CMat,
    noise: f64,
    p_max: f64,
    u: Vec<Complex64>,
    w: Vec<f64>,
}

impl BlockScheme for WmmseScheme<'_> {
    fn update_aux_and_f(&mut self, bf: &mut BeamformerSet, mu: f64) -> Result<()> {
        self.u = update_u(self.h, &bf.f_aux, self.noise);
        let e = mse_values(self.h, &bf.f_aux, &self.u, self.noise);
        self.w = update_w(&e)?;
        bf.f_aux = update_f_aux(self.h, bf, &self.u, &self.w, mu, self.p_max)?.f_aux;
        Ok(())
    }

    fn surrogate(&self, bf: &BeamformerSet, mu: f64) -> f64 {
        penalized_objective(self.h, bf, &self.u, &self.w, mu, self.noise)
    }

    fn objective(&self, precoder: &CMat) -> f64 {
        let gains = self.h.adjoint() * precoder;
        metrics::sinr_from_gains(&gains, self.noise).iter().map(|g| (1.0 + g).log2()).sum()
    }
}

/// Runs the penalized WMMSE scheme on `h_eff` (`n_t x k`) for the structure
/// in `config`. `pm` only feeds the reported energy efficiency.
pub fn solve_se(
    h_eff: &CMat,
    config: &SystemConfig,
    pm: &PowerModel,
    opts: &SeOptions,
) -> Result<(BeamformerSet, SolveReport)> {
    let start = Instant::now();
    check_problem(h_eff, config)?;
    let scaled = Normalized::new(h_eff, config.noise_power, config.p_max);
    let mut scheme = WmmseScheme {
        h: &scaled.h,
        noise: 1.0,
        p_max: scaled.p_max,
        u: vec![],
        w: vec![],
    };
    let repair = if opts.fill_power_budget { PowerRepair::Fill } else { PowerRepair::CapOnly };
    let init = init_beamformers_with(&scaled.h, scaled.p_max, config.analog_structure)?;
    let run = pdd::run(&mut scheme, init, config.analog_structure, scaled.p_max, &opts.control(), repair)?;
    let bf = scaled.to_raw(&run.bf);
    let metrics = metrics::evaluate(h_eff, &bf, config, pm)?;
    let report = run.into_report(metrics, scaled.sigma, |v| v, start.elapsed());
    Ok((bf, report))
}

pub(crate) fn check_problem(h_eff: &CMat, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if h_eff.shape() != (config.n_t, config.k_users) {
        return Err(Error::Dimension(format!(
            "effective channel is {}x{}, expected {}x{}",
            h_eff.nrows(),
            h_eff.ncols(),
            config.n_t,
            config.k_users
        )));
    }
    Ok(())
}
