//! Energy-efficiency maximization at a fixed RC selection.
//!
//! Two fractional-programming schemes share the penalty loop of
//! [`crate::hbf_se`]:
//!
//! * DQTFP applies the quadratic transform twice (to the EE ratio through
//!   `ρ` and to each SINR through `τ_k`) and solves the resulting concave
//!   problem in `F` by projected-gradient ascent.
//! * LDTFP uses a Dinkelbach parameter `ω`, the Lagrangian dual transform
//!   (`t_k`) and a quadratic transform (`z_k`), so every block update is in
//!   closed form.
//!
//! Internally both run with noise power and circuit power scaled to one.

use std::f64::consts::LN_2;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hbf_se::{check_problem, init_beamformers_with, penalty_weight, weighted_gram, FUpdate};
use crate::metrics::{self, BeamformerSet, PowerModel};
use crate::numerics::{self, BisectionSpec, PgOutcome, PgSolverSpec, RidgeSystem};
use crate::pdd::{self, BlockScheme, LoopControl, Normalized, PowerRepair};
use crate::report::SolveReport;
use crate::system_model::SystemConfig;
use crate::{CMat, CVec, Error, Result};

/// Scalars of the power model and constraint that the EE updates need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EeContext {
    pub noise_power: f64,
    pub p_max: f64,
    pub eta_pa: f64,
    /// Circuit power `P_C` in mW.
    pub p_circuit: f64,
}

impl EeContext {
    pub fn new(config: &SystemConfig, pm: &PowerModel) -> Result<Self> {
        pm.validate()?;
        Ok(EeContext {
            noise_power: config.noise_power,
            p_max: config.p_max,
            eta_pa: pm.eta_pa,
            p_circuit: metrics::circuit_power(config, pm),
        })
    }

    /// `‖F‖²/η + P_C`.
    pub fn denominator(&self, pt: f64) -> f64 {
        pt / self.eta_pa + self.p_circuit
    }

    /// Same problem with unit noise power and unit circuit power.
    fn normalized(&self) -> EeContext {
        EeContext {
            noise_power: 1.0,
            p_max: self.p_max / self.noise_power,
            eta_pa: self.eta_pa * self.p_circuit / self.noise_power,
            p_circuit: 1.0,
        }
    }
}

fn sum_rate(h_eff: &CMat, f: &CMat, noise_power: f64) -> f64 {
    let gains = h_eff.adjoint() * f;
    metrics::sinr_from_gains(&gains, noise_power).iter().map(|g| (1.0 + g).log2()).sum()
}

fn ee_of(h_eff: &CMat, f: &CMat, ctx: &EeContext) -> f64 {
    sum_rate(h_eff, f, ctx.noise_power) / ctx.denominator(f.norm_squared())
}

/// Outer quadratic-transform variable `ρ = √SE / (‖F‖²/η + P_C)`.
pub fn update_rho(se: f64, pt: f64, pm: &PowerModel, config: &SystemConfig) -> Result<f64> {
    let denom = metrics::total_power(pt, config, pm)?;
    rho_from(se, denom)
}

fn rho_from(se: f64, denom: f64) -> Result<f64> {
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("EE denominator must be positive, got {denom}")));
    }
    Ok(se.max(0.0).sqrt() / denom)
}

/// Inner quadratic-transform variables
/// `τ_k = h_k^H f_k / (Σ_{i≠k} |h_k^H f_i|² + σ²)`.
pub fn update_tau(h_eff: &CMat, f_aux: &CMat, noise_power: f64) -> Vec<Complex64> {
    let gains = h_eff.adjoint() * f_aux;
    (0..gains.nrows())
        .map(|k| {
            let interference: f64 =
                (0..gains.ncols()).filter(|&i| i != k).map(|i| gains[(k, i)].norm_sqr()).sum();
            gains[(k, k)] / (interference + noise_power)
        })
        .collect()
}

/// Quadratic-transform SINR surrogates
/// `g_k = 2 Re{τ_k^* h_k^H f_k} - |τ_k|² (Σ_{i≠k} |h_k^H f_i|² + σ²)`.
pub fn transformed_sinrs(h_eff: &CMat, f: &CMat, tau: &[Complex64], noise_power: f64) -> Vec<f64> {
    let gains = h_eff.adjoint() * f;
    (0..gains.nrows())
        .map(|k| {
            let interference: f64 =
                (0..gains.ncols()).filter(|&i| i != k).map(|i| gains[(k, i)].norm_sqr()).sum();
            2.0 * (tau[k].conj() * gains[(k, k)]).re - tau[k].norm_sqr() * (interference + noise_power)
        })
        .collect()
}

/// Sum of `log2(1 + g_k)`, or `None` outside the log domain.
fn transformed_rate(g: &[f64]) -> Option<f64> {
    if g.iter().any(|&x| !(1.0 + x > 0.0)) {
        return None;
    }
    Some(g.iter().map(|x| (1.0 + x).log2()).sum())
}

/// Data of the concave `F` subproblem of DQTFP.
#[derive(Debug, Clone, Copy)]
pub struct DqtfpSubproblem<'a> {
    pub h_eff: &'a CMat,
    /// Realized precoder `F_RF F_BB` the penalty pulls towards.
    pub f_tilde: &'a CMat,
    pub rho: f64,
    pub tau: &'a [Complex64],
    pub mu: f64,
    pub ctx: &'a EeContext,
}

impl DqtfpSubproblem<'_> {
    /// `2ρ√S - ρ²(‖F‖²/η + P_C) - ‖F - F̃‖²/(2μ)` with
    /// `S = Σ log2(1 + g_k)`; `-inf` where `S` is undefined or negative.
    pub fn objective(&self, f: &CMat) -> f64 {
        let g = transformed_sinrs(self.h_eff, f, self.tau, self.ctx.noise_power);
        let s = match transformed_rate(&g) {
            Some(s) if s >= 0.0 => s,
            _ => return f64::NEG_INFINITY,
        };
        2.0 * self.rho * s.sqrt()
            - self.rho * self.rho * self.ctx.denominator(f.norm_squared())
            - penalty_weight(self.mu) * (f - self.f_tilde).norm_squared()
    }

    /// Wirtinger gradient `∂/∂F^*` of [`Self::objective`].
    pub fn gradient(&self, f: &CMat) -> CMat {
        let gains = self.h_eff.adjoint() * f;
        let k = gains.nrows();
        let g = transformed_sinrs(self.h_eff, f, self.tau, self.ctx.noise_power);
        let s: f64 = g.iter().map(|x| (1.0 + x).log2()).sum();
        let mut grad = f * Complex64::from(-self.rho * self.rho / self.ctx.eta_pa);
        grad -= (f - self.f_tilde) * Complex64::from(penalty_weight(self.mu));
        if s > 0.0 && s.is_finite() {
            let c: Vec<f64> = g.iter().map(|x| 1.0 / ((1.0 + x) * LN_2)).collect();
            let m = CMat::from_fn(k, k, |row, col| {
                if row == col {
                    self.tau[col] * c[col]
                } else {
                    gains[(row, col)] * (-c[row] * self.tau[row].norm_sqr())
                }
            });
            grad += self.h_eff * m * Complex64::from(self.rho / s.sqrt());
        }
        grad
    }
}

/// Improves the auxiliary precoder on the DQTFP subproblem by
/// projected-gradient ascent from the current `bf.f_aux`.
pub fn dqtfp_update_f(
    h_eff: &CMat,
    bf: &BeamformerSet,
    rho: f64,
    tau: &[Complex64],
    mu: f64,
    ctx: &EeContext,
    spec: &PgSolverSpec,
) -> Result<(CMat, PgOutcome)> {
    let f_tilde = bf.precoder();
    let sub = DqtfpSubproblem { h_eff, f_tilde: &f_tilde, rho, tau, mu, ctx };
    let (n_t, k) = bf.f_aux.shape();
    let to_mat = |v: &CVec| CMat::from_column_slice(n_t, k, v.as_slice());
    let start = CVec::from_column_slice(bf.f_aux.as_slice());
    let outcome = numerics::maximize_concave_ball(
        |v| sub.objective(&to_mat(v)),
        |v| {
            let g = sub.gradient(&to_mat(v));
            CVec::from_column_slice(g.as_slice())
        },
        ctx.p_max,
        &start,
        spec,
    )?;
    Ok((to_mat(&outcome.point), outcome))
}

/// Penalized double-quadratic-transform objective at fixed `ρ`, `τ`.
pub fn dqtfp_surrogate(
    h_eff: &CMat,
    bf: &BeamformerSet,
    rho: f64,
    tau: &[Complex64],
    mu: f64,
    ctx: &EeContext,
) -> f64 {
    let f_tilde = bf.precoder();
    DqtfpSubproblem { h_eff, f_tilde: &f_tilde, rho, tau, mu, ctx }.objective(&bf.f_aux)
}

/// Dinkelbach parameter. With `log_numerator` false the numerator is
/// `Σ(1 + γ̃_k)`; otherwise it is the sum rate `Σ log2(1 + γ̃_k)`.
pub fn update_omega(sinrs: &[f64], pt: f64, ctx: &EeContext, log_numerator: bool) -> Result<f64> {
    let denom = ctx.denominator(pt);
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("EE denominator must be positive, got {denom}")));
    }
    let numerator: f64 = if log_numerator {
        sinrs.iter().map(|g| (1.0 + g).log2()).sum()
    } else {
        sinrs.iter().map(|g| 1.0 + g).sum()
    };
    Ok(numerator / denom)
}

/// Lagrangian-dual-transform variables; equal to the SINRs of `f_aux`.
pub fn update_t(h_eff: &CMat, f_aux: &CMat, noise_power: f64) -> Vec<f64> {
    metrics::sinr_from_gains(&(h_eff.adjoint() * f_aux), noise_power)
}

/// Quadratic-transform variables
/// `z_k = √(t_k + 1) h_k^H f_k / (ln 2 (Σ_i |h_k^H f_i|² + σ²))`.
pub fn update_z(h_eff: &CMat, f_aux: &CMat, t: &[f64], noise_power: f64) -> Vec<Complex64> {
    let gains = h_eff.adjoint() * f_aux;
    (0..gains.nrows())
        .map(|k| {
            let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
            gains[(k, k)] * ((t[k] + 1.0).sqrt() / (LN_2 * (total + noise_power)))
        })
        .collect()
}

/// Lagrangian dual transform of the sum rate:
/// `Σ log2(1 + t_k) - t_k/ln 2 + (1 + t_k) γ_k / ((1 + γ_k) ln 2)`.
pub fn lagrangian_rate(t: &[f64], sinrs: &[f64]) -> f64 {
    t.iter()
        .zip(sinrs)
        .map(|(&tk, &g)| (1.0 + tk).log2() - tk / LN_2 + (1.0 + tk) * g / ((1.0 + g) * LN_2))
        .sum()
}

/// Fully transformed LDTFP objective at fixed `ω`, `t`, `z`.
pub fn ldtfp_surrogate(
    h_eff: &CMat,
    bf: &BeamformerSet,
    omega: f64,
    t: &[f64],
    z: &[Complex64],
    mu: f64,
    ctx: &EeContext,
) -> f64 {
    let gains = h_eff.adjoint() * &bf.f_aux;
    let mut value = 0.0;
    for k in 0..gains.nrows() {
        let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
        value += (1.0 + t[k]).log2() - t[k] / LN_2
            + 2.0 * (1.0 + t[k]).sqrt() * (z[k].conj() * gains[(k, k)]).re
            - LN_2 * z[k].norm_sqr() * (total + ctx.noise_power);
    }
    value - omega * ctx.denominator(bf.f_aux.norm_squared())
        - penalty_weight(mu) * (&bf.f_aux - bf.precoder()).norm_squared()
}

/// Closed-form LDTFP precoder: column `i` solves
/// `(ln 2 Σ_k |z_k|² h_k h_k^H + (ω/η + 1/(2μ) + ν) I) f_i =
/// √(t_i + 1) z_i h_i + f̃_i/(2μ)` with `ν` bisected for the budget.
pub fn ldtfp_update_f(
    h_eff: &CMat,
    bf: &BeamformerSet,
    omega: f64,
    t: &[f64],
    z: &[Complex64],
    mu: f64,
    ctx: &EeContext,
) -> Result<FUpdate> {
    if !(mu > 0.0) || !(omega >= 0.0) {
        return Err(Error::Domain(format!("need mu > 0 and omega >= 0, got {mu} and {omega}")));
    }
    let weights: Vec<f64> = z.iter().map(|zk| LN_2 * zk.norm_sqr()).collect();
    let a = weighted_gram(h_eff, &weights);
    let c = penalty_weight(mu);
    let mut rhs = bf.precoder() * Complex64::from(c);
    for i in 0..z.len() {
        let mut col = rhs.column_mut(i);
        col += h_eff.column(i) * (z[i] * (t[i] + 1.0).sqrt());
    }
    let ridge = omega / ctx.eta_pa + c;
    let sol = RidgeSystem::new(&a, &rhs, ridge)?.solve_within_budget(ctx.p_max, &BisectionSpec::default())?;
    Ok(FUpdate { f_aux: sol.x, nu: sol.nu })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EeOptions {
    /// Initial penalty coefficient, relative to the normalized budget `P_max / σ²`.
    pub mu_init: f64,
    pub mu_decay: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub residual_tol: f64,
    /// Projected-gradient settings for the DQTFP precoder step.
    pub pg: PgSolverSpec,
    /// Use `Σ log2(1 + γ̃_k)` instead of `Σ(1 + γ̃_k)` in the `ω` update.
    pub dinkelbach_log_numerator: bool,
}

impl Default for EeOptions {
    fn default() -> Self {
        EeOptions {
            mu_init: 1.0,
            mu_decay: 0.5,
            inner_tol: 1e-4,
            max_inner: 100,
            outer_tol: 1e-4,
            max_outer: 20,
            residual_tol: 1e-4,
            pg: PgSolverSpec::default(),
            dinkelbach_log_numerator: false,
        }
    }
}

impl EeOptions {
    fn control(&self, p_max: f64) -> LoopControl {
        LoopControl {
            mu_init: self.mu_init * p_max,
            mu_decay: self.mu_decay,
            inner_tol: self.inner_tol,
            max_inner: self.max_inner,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            residual_tol: self.residual_tol,
        }
    }
}

pub(crate) struct DqtfpState {
    h: CMat,
    ctx: EeContext,
    pg: PgSolverSpec,
    pub rho: f64,
    pub tau: Vec<Complex64>,
}

impl BlockScheme for DqtfpState {
    fn update_aux_and_f(&mut self, bf: &mut BeamformerSet, mu: f64) -> Result<()> {
        self.tau = update_tau(&self.h, &bf.f_aux, self.ctx.noise_power);
        let se = sum_rate(&self.h, &bf.f_aux, self.ctx.noise_power);
        self.rho = rho_from(se, self.ctx.denominator(bf.f_aux.norm_squared()))?;
        bf.f_aux = dqtfp_update_f(&self.h, bf, self.rho, &self.tau, mu, &self.ctx, &self.pg)?.0;
        Ok(())
    }

    fn surrogate(&self, bf: &BeamformerSet, mu: f64) -> f64 {
        dqtfp_surrogate(&self.h, bf, self.rho, &self.tau, mu, &self.ctx)
    }

    fn objective(&self, precoder: &CMat) -> f64 {
        ee_of(&self.h, precoder, &self.ctx)
    }

    fn auxiliary(&self) -> f64 {
        self.rho
    }
}

pub(crate) struct LdtfpState {
    h: CMat,
    ctx: EeContext,
    log_numerator: bool,
    pub omega: f64,
    pub t: Vec<f64>,
    pub z: Vec<Complex64>,
}

impl BlockScheme for LdtfpState {
    fn update_aux_and_f(&mut self, bf: &mut BeamformerSet, mu: f64) -> Result<()> {
        self.t = update_t(&self.h, &bf.f_aux, self.ctx.noise_power);
        self.omega = update_omega(&self.t, bf.f_aux.norm_squared(), &self.ctx, self.log_numerator)?;
        self.z = update_z(&self.h, &bf.f_aux, &self.t, self.ctx.noise_power);
        bf.f_aux = ldtfp_update_f(&self.h, bf, self.omega, &self.t, &self.z, mu, &self.ctx)?.f_aux;
        Ok(())
    }

    fn surrogate(&self, bf: &BeamformerSet, mu: f64) -> f64 {
        ldtfp_surrogate(&self.h, bf, self.omega, &self.t, &self.z, mu, &self.ctx)
    }

    fn objective(&self, precoder: &CMat) -> f64 {
        ee_of(&self.h, precoder, &self.ctx)
    }

    fn auxiliary(&self) -> f64 {
        self.omega
    }
}

fn solve_with<S: BlockScheme>(
    h_eff: &CMat,
    config: &SystemConfig,
    pm: &PowerModel,
    opts: &EeOptions,
    make: impl FnOnce(CMat, EeContext) -> S,
) -> Result<(BeamformerSet, SolveReport)> {
    let start = Instant::now();
    check_problem(h_eff, config)?;
    let ctx = EeContext::new(config, pm)?;
    let scaled = Normalized::new(h_eff, config.noise_power, config.p_max);
    let inner_ctx = ctx.normalized();
    let mut scheme = make(scaled.h.clone(), inner_ctx);
    let init = init_beamformers_with(&scaled.h, scaled.p_max, config.analog_structure)?;
    let run = pdd::run(&mut scheme, init, config.analog_structure, scaled.p_max, &opts.control(scaled.p_max), PowerRepair::CapOnly)?;
    let bf = scaled.to_raw(&run.bf);
    let metrics = metrics::evaluate(h_eff, &bf, config, pm)?;
    let p_c = ctx.p_circuit;
    Ok((bf, run.into_report(metrics, scaled.sigma, |v| v / p_c, start.elapsed())))
}

/// DQTFP: alternates `τ`, `ρ`, a projected-gradient `F` step, `F_RF` and
/// `F_BB`, shrinking the penalty coefficient between outer iterations.
pub fn solve_ee_dqtfp(
    h_eff: &CMat,
    config: &SystemConfig,
    pm: &PowerModel,
    opts: &EeOptions,
) -> Result<(BeamformerSet, SolveReport)> {
    opts.pg.validate()?;
    solve_with(h_eff, config, pm, opts, |h, ctx| DqtfpState { h, ctx, pg: opts.pg, rho: 0.0, tau: vec![] })
}

/// LDTFP: alternates `ω`, `t`, `z`, the closed-form `F`, `F_RF` and `F_BB`.
pub fn solve_ee_ldtfp(
    h_eff: &CMat,
    config: &SystemConfig,
    pm: &PowerModel,
    opts: &EeOptions,
) -> Result<(BeamformerSet, SolveReport)> {
    solve_with(h_eff, config, pm, opts, |h, ctx| LdtfpState {
        h,
        ctx,
        log_numerator: opts.dinkelbach_log_numerator,
        omega: 0.0,
        t: vec![],
        z: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbf_se::init_beamformers;
    use crate::oracles::finite_difference_gradient;
    use crate::system_model::{apply_selection, fpa_baseline_selection, generate_extended_channel, AnalogStructure};
    use crate::test_util;

    fn ctx(p_max: f64) -> EeContext {
        EeContext { noise_power: 1.0, p_max, eta_pa: 0.27, p_circuit: 50.0 }
    }

    fn one() -> CMat {
        CMat::from_element(1, 1, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn rho_examples_and_qt_identity() {
        assert_eq!(rho_from(4.0, 2.0).unwrap(), 1.0);
        assert_eq!(rho_from(0.0, 2.0).unwrap(), 0.0);
        assert!(rho_from(1.0, 0.0).is_err());
        let mut rng = test_util::rng(20);
        for _ in 0..100 {
            let a: f64 = rand::Rng::random_range(&mut rng, 0.01..50.0);
            let b: f64 = rand::Rng::random_range(&mut rng, 0.01..50.0);
            let rho = rho_from(a, b).unwrap();
            assert!((2.0 * rho * a.sqrt() - rho * rho * b - a / b).abs() <= 1e-12 * (a / b).max(1.0));
        }
        let config = SystemConfig::standard();
        let pm = PowerModel::default();
        let direct = update_rho(4.0, 10.0, &pm, &config).unwrap();
        let denom = 10.0 / pm.eta_pa + metrics::circuit_power(&config, &pm);
        assert!((direct - 2.0 / denom).abs() < 1e-15);
    }

    #[test]
    fn tau_examples_and_stationarity() {
        assert_eq!(update_tau(&one(), &one(), 1.0)[0], Complex64::new(1.0, 0.0));
        assert_eq!(update_tau(&one(), &CMat::zeros(1, 1), 1.0)[0], Complex64::new(0.0, 0.0));
        let mut rng = test_util::rng(21);
        for _ in 0..20 {
            let h = test_util::rand_mat(&mut rng, 5, 3);
            let f = test_util::rand_mat(&mut rng, 5, 3);
            let tau = update_tau(&h, &f, 0.5);
            for k in 0..3 {
                let obj = |x: &CVec| {
                    let mut tt = tau.clone();
                    tt[k] = x[0];
                    transformed_sinrs(&h, &f, &tt, 0.5)[k]
                };
                let g = finite_difference_gradient(obj, &CVec::from_element(1, tau[k]), 1e-5).unwrap();
                assert!(g.norm() < 1e-7, "{}", g.norm());
            }
            let g = transformed_sinrs(&h, &f, &tau, 0.5);
            let sinr = metrics::sinr_from_gains(&(h.adjoint() * &f), 0.5);
            for (a, b) in g.iter().zip(&sinr) {
                assert!((a - b).abs() <= 1e-10 * b.max(1.0));
            }
        }
    }

    #[test]
    fn dqtfp_gradient_matches_finite_differences() {
        let mut rng = test_util::rng(22);
        for mu in [0.3, f64::INFINITY] {
            for _ in 0..10 {
                let h = test_util::rand_mat(&mut rng, 4, 2);
                let f = test_util::rand_mat(&mut rng, 4, 2);
                let f_tilde = test_util::rand_mat(&mut rng, 4, 2);
                let tau = update_tau(&h, &f, 1.0);
                let c = ctx(100.0);
                let sub = DqtfpSubproblem { h_eff: &h, f_tilde: &f_tilde, rho: 0.2, tau: &tau, mu, ctx: &c };
                let x = CVec::from_column_slice(f.as_slice());
                let fd = finite_difference_gradient(
                    |v| sub.objective(&CMat::from_column_slice(4, 2, v.as_slice())),
                    &x,
                    1e-6,
                )
                .unwrap();
                let analytic = CVec::from_column_slice(sub.gradient(&f).as_slice());
                assert!((fd - &analytic).norm() <= 1e-6 * (1.0 + sub.objective(&f).abs()));
            }
        }
    }

    #[test]
    fn dqtfp_f_step_examples() {
        let mut rng = test_util::rng(23);
        let h = test_util::rand_mat(&mut rng, 4, 2);
        let config = SystemConfig { n_em: 16, n_t: 4, n_rf: 2, k_users: 2, d_p: 0.25, ..SystemConfig::standard() };
        let bf = init_beamformers_with(&h, 1.0, config.analog_structure).unwrap();
        let c = ctx(2.0);
        let tau = update_tau(&h, &bf.f_aux, 1.0);
        let (f, _) = dqtfp_update_f(&h, &bf, 0.0, &tau, 0.5, &c, &PgSolverSpec::default()).unwrap();
        assert!((f - bf.precoder()).norm() < 1e-5);

        for _ in 0..10 {
            let bf = init_beamformers_with(&test_util::rand_mat(&mut rng, 4, 2), 2.0, config.analog_structure).unwrap();
            let tau = update_tau(&h, &bf.f_aux, 1.0);
            let rho = 0.05;
            let before = dqtfp_surrogate(&h, &bf, rho, &tau, 0.2, &c);
            let (f, _) = dqtfp_update_f(&h, &bf, rho, &tau, 0.2, &c, &PgSolverSpec::default()).unwrap();
            assert!(f.norm_squared() <= 2.0 * (1.0 + 1e-9));
            let after = dqtfp_surrogate(&h, &BeamformerSet { f_aux: f, ..bf.clone() }, rho, &tau, 0.2, &c);
            assert!(after >= before);
        }
    }

    #[test]
    fn dqtfp_f_step_matches_scalar_grid() {
        // K = 1, N_T = 1, no penalty: the step is a concave 1-D problem in |f|.
        let h = CMat::from_element(1, 1, Complex64::new(0.9, 0.4));
        let c = ctx(3.0);
        let bf = BeamformerSet { f_rf: CMat::identity(1, 1), f_bb: one() * Complex64::from(0.5), f_aux: one() * Complex64::from(0.5) };
        let tau = update_tau(&h, &bf.f_aux, 1.0);
        let rho = 0.08;
        let (f, _) = dqtfp_update_f(&h, &bf, rho, &tau, f64::INFINITY, &c, &PgSolverSpec::default()).unwrap();
        let direction = h[(0, 0)] * tau[0];
        let unit = direction / direction.norm();
        let sub = DqtfpSubproblem { h_eff: &h, f_tilde: &bf.f_aux, rho, tau: &tau, mu: f64::INFINITY, ctx: &c };
        let best = (0..=200_000)
            .map(|i| 3f64.sqrt() * i as f64 / 200_000.0)
            .map(|a| sub.objective(&CMat::from_element(1, 1, unit * a)))
            .fold(f64::MIN, f64::max);
        assert!((sub.objective(&f) - best).abs() <= 1e-4 * best.abs().max(1.0));
    }

    #[test]
    fn omega_examples() {
        let c = EeContext { p_circuit: 2.0, ..ctx(1.0) };
        assert_eq!(update_omega(&[0.0, 0.0], 0.0, &c, false).unwrap(), 1.0);
        assert_eq!(update_omega(&[0.0, 0.0, 0.0], 0.0, &ctx(1.0), false).unwrap(), 3.0 / 50.0);
        let mut rng = test_util::rng(24);
        for _ in 0..20 {
            let sinrs: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, 0.0..30.0)).collect();
            let pt: f64 = rand::Rng::random_range(&mut rng, 0.0..100.0);
            let c = ctx(100.0);
            let denom = pt / c.eta_pa + c.p_circuit;
            let printed: f64 = sinrs.iter().map(|g| 1.0 + g).sum::<f64>() / denom;
            let logged: f64 = sinrs.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / denom;
            assert!((update_omega(&sinrs, pt, &c, false).unwrap() - printed).abs() <= 1e-12 * printed);
            assert!((update_omega(&sinrs, pt, &c, true).unwrap() - logged).abs() <= 1e-12 * logged);
        }
    }

    #[test]
    fn t_equals_sinr() {
        assert_eq!(update_t(&one(), &one(), 1.0), vec![1.0]);
        assert_eq!(update_t(&one(), &CMat::zeros(1, 1), 1.0), vec![0.0]);
        let mut rng = test_util::rng(25);
        for _ in 0..100 {
            let h = test_util::rand_mat(&mut rng, 6, 3);
            let f = test_util::rand_mat(&mut rng, 6, 3);
            let t = update_t(&h, &f, 0.7);
            let s = metrics::sinr_per_user(&h, &f, 0.7).unwrap();
            for (a, b) in t.iter().zip(&s) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
            let rate: f64 = s.iter().map(|g| (1.0 + g).log2()).sum();
            assert!((lagrangian_rate(&t, &s) - rate).abs() <= 1e-12 * rate.max(1.0));
        }
    }

    #[test]
    fn z_examples_and_stationarity() {
        let z = update_z(&one(), &one(), &[1.0], 1.0);
        assert!((z[0].re - 2f64.sqrt() / (2.0 * LN_2)).abs() < 1e-15);
        assert_eq!(update_z(&one(), &CMat::zeros(1, 1), &[0.0], 1.0)[0], Complex64::new(0.0, 0.0));
        let mut rng = test_util::rng(26);
        let c = ctx(100.0);
        for _ in 0..20 {
            let h = test_util::rand_mat(&mut rng, 5, 3);
            let f = test_util::rand_mat(&mut rng, 5, 3);
            let t = update_t(&h, &f, 1.0);
            let z = update_z(&h, &f, &t, 1.0);
            let bf = BeamformerSet { f_rf: CMat::identity(5, 5), f_bb: f.clone(), f_aux: f.clone() };
            for k in 0..3 {
                let obj = |x: &CVec| {
                    let mut zz = z.clone();
                    zz[k] = x[0];
                    ldtfp_surrogate(&h, &bf, 0.1, &t, &zz, 1.0, &c)
                };
                let value = obj(&CVec::from_element(1, z[k]));
                let g = finite_difference_gradient(obj, &CVec::from_element(1, z[k]), 1e-5).unwrap();
                assert!(g.norm() <= 1e-8 * (1.0 + value.abs()), "{}", g.norm());
            }
            // At the optimal t and z the transformed objective equals the
            // Dinkelbach objective.
            let rate = sum_rate(&h, &f, 1.0);
            let direct = rate - 0.1 * c.denominator(f.norm_squared());
            assert!((ldtfp_surrogate(&h, &bf, 0.1, &t, &z, 1.0, &c) - direct).abs() < 1e-10 * rate.max(1.0));
        }
    }

    #[test]
    fn ldtfp_f_step_examples() {
        let mut rng = test_util::rng(27);
        let h = test_util::rand_mat(&mut rng, 4, 2);
        let bf = init_beamformers_with(&h, 1.0, AnalogStructure::FullyConnected).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        let out = ldtfp_update_f(&h, &bf, 0.0, &[0.0, 0.0], &zero, 0.4, &ctx(1.0 + 1e-9)).unwrap();
        assert!((out.f_aux - bf.precoder()).norm() < 1e-12);

        let c = ctx(0.5);
        for _ in 0..20 {
            let h = test_util::rand_mat(&mut rng, 6, 3) * Complex64::from(3.0);
            let bf = init_beamformers_with(&h, 2.0, AnalogStructure::FullyConnected).unwrap();
            let t = update_t(&h, &bf.f_aux, 1.0);
            let z = update_z(&h, &bf.f_aux, &t, 1.0);
            let out = ldtfp_update_f(&h, &bf, 0.01, &t, &z, 0.3, &c).unwrap();
            assert!(out.f_aux.norm_squared() <= c.p_max * (1.0 + 1e-8));
            let weights: Vec<f64> = z.iter().map(|zk| LN_2 * zk.norm_sqr()).collect();
            let psi = weighted_gram(&h, &weights)
                + CMat::identity(6, 6) * Complex64::from(0.01 / c.eta_pa + penalty_weight(0.3) + out.nu);
            let mut q = bf.precoder() * Complex64::from(penalty_weight(0.3));
            for i in 0..3 {
                let mut col = q.column_mut(i);
                col += h.column(i) * (z[i] * (t[i] + 1.0).sqrt());
            }
            assert!((psi * &out.f_aux - &q).norm() <= 1e-8 * q.norm());
        }
    }

    fn single_user_oracle(h: &CMat, config: &SystemConfig, pm: &PowerModel) -> f64 {
        let gain = h.norm_squared() / config.noise_power;
        let p_c = metrics::circuit_power(config, pm);
        (0..=200_000)
            .map(|i| config.p_max * i as f64 / 200_000.0)
            .map(|p| (1.0 + p * gain).log2() / (p / pm.eta_pa + p_c))
            .fold(f64::MIN, f64::max)
    }

    fn single_user_case() -> (CMat, SystemConfig) {
        let config = SystemConfig {
            n_em: 8,
            n_t: 2,
            n_rf: 1,
            k_users: 1,
            d_p: 0.25,
            analog_structure: AnalogStructure::FullyDigital,
            ..SystemConfig::standard()
        };
        let ch = generate_extended_channel(&config, 1, 5).unwrap();
        let h = apply_selection(&ch, &fpa_baseline_selection(&config).unwrap(), &config).unwrap();
        (h, config)
    }

    #[test]
    fn dqtfp_matches_power_grid_oracle() {
        let (h, config) = single_user_case();
        let pm = PowerModel::default();
        let (_, report) = solve_ee_dqtfp(&h, &config, &pm, &EeOptions::default()).unwrap();
        let oracle = single_user_oracle(&h, &config, &pm);
        assert!((report.metrics.ee - oracle).abs() <= 1e-2 * oracle, "{} vs {oracle}", report.metrics.ee);
    }

    #[test]
    fn ldtfp_log_variant_matches_power_grid_oracle() {
        let (h, config) = single_user_case();
        let pm = PowerModel::default();
        let opts = EeOptions { dinkelbach_log_numerator: true, ..EeOptions::default() };
        let (_, report) = solve_ee_ldtfp(&h, &config, &pm, &opts).unwrap();
        let oracle = single_user_oracle(&h, &config, &pm);
        assert!((report.metrics.ee - oracle).abs() <= 1e-2 * oracle, "{} vs {oracle}", report.metrics.ee);
        // Dinkelbach fixed point: the last ω equals the EE it was built from.
        let omega = *report.auxiliary_trace.last().unwrap();
        assert!((omega / metrics::circuit_power(&config, &pm) - report.metrics.ee).abs() <= 1e-3 * report.metrics.ee);
    }

    #[test]
    fn tiny_budget_gives_vanishing_ee() {
        let (h, mut config) = single_user_case();
        config.p_max = 1e-9;
        let pm = PowerModel::default();
        for solve in [solve_ee_dqtfp, solve_ee_ldtfp] {
            let (_, report) = solve(&h, &config, &pm, &EeOptions::default()).unwrap();
            assert!(report.metrics.pt <= 1e-9 * (1.0 + 1e-9));
            assert!(report.metrics.ee < 1e-8);
        }
    }

    #[test]
    fn hybrid_runs_keep_structure_and_improve_on_init() {
        let pm = PowerModel::default();
        for structure in [AnalogStructure::FullyConnected, AnalogStructure::PartiallyConnected] {
            let config = SystemConfig { n_em: 40, n_t: 4, n_rf: 2, k_users: 2, analog_structure: structure, ..SystemConfig::standard() };
            let ch = generate_extended_channel(&config, 4, 9).unwrap();
            let h = apply_selection(&ch, &fpa_baseline_selection(&config).unwrap(), &config).unwrap();
            let init = init_beamformers(&h, &config).unwrap();
            let init_ee = metrics::evaluate(&h, &init, &config, &pm).unwrap().ee;
            for solve in [solve_ee_dqtfp, solve_ee_ldtfp] {
                let (bf, report) = solve(&h, &config, &pm, &EeOptions::default()).unwrap();
                assert!(bf.satisfies_structure(structure, 2, 1e-12));
                assert!(report.metrics.pt <= config.p_max * (1.0 + 1e-9));
                assert!(report.metrics.ee >= init_ee * (1.0 - 1e-12));
                let recomputed = metrics::evaluate(&h, &bf, &config, &pm).unwrap();
                assert_eq!(recomputed, report.metrics);
            }
        }
    }

    #[test]
    fn dqtfp_surrogate_non_decreasing_for_pc() {
        let pm = PowerModel::default();
        let config = SystemConfig {
            n_em: 40,
            n_t: 4,
            n_rf: 2,
            k_users: 2,
            analog_structure: AnalogStructure::PartiallyConnected,
            ..SystemConfig::standard()
        };
        for seed in 0..3 {
            let ch = generate_extended_channel(&config, 4, seed).unwrap();
            let h = apply_selection(&ch, &fpa_baseline_selection(&config).unwrap(), &config).unwrap();
            let (_, report) = solve_ee_dqtfp(&h, &config, &pm, &EeOptions::default()).unwrap();
            crate::pdd::assert_surrogate_monotone(&report, true);
        }
    }
}
