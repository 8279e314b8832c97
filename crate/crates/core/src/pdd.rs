//! Shared penalty-dual-decomposition loop for the fixed-selection solvers.

use std::time::Duration;

use num_complex::Complex64;

use crate::hbf_se::{update_f_bb, update_f_rf};
use crate::metrics::{BeamformerSet, Metrics};
use crate::report::{SolveReport, SolveStatus};
use crate::system_model::AnalogStructure;
use crate::{CMat, Error, Result};

/// Block updates of one scheme apart from the common `F_RF`/`F_BB` steps.
pub(crate) trait BlockScheme {
    /// Updates the scheme's auxiliary variables and then `bf.f_aux`.
    fn update_aux_and_f(&mut self, bf: &mut BeamformerSet, mu: f64) -> Result<()>;
    fn surrogate(&self, bf: &BeamformerSet, mu: f64) -> f64;
    /// True objective of a realizable precoder, larger is better.
    fn objective(&self, precoder: &CMat) -> f64;
    fn auxiliary(&self) -> f64 {
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopControl {
    pub mu_init: f64,
    pub mu_decay: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub residual_tol: f64,
}

impl LoopControl {
    fn validate(&self) -> Result<()> {
        if !(self.mu_init > 0.0) || !(self.mu_decay > 0.0 && self.mu_decay < 1.0) {
            return Err(Error::Config(format!(
                "need mu_init > 0 and 0 < mu_decay < 1, got {} and {}",
                self.mu_init, self.mu_decay
            )));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if !(self.inner_tol >= 0.0 && self.outer_tol >= 0.0 && self.residual_tol >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PowerRepair {
    /// Scale to meet the budget with equality.
    Fill,
    /// Scale down only when over budget.
    CapOnly,
}

/// Problem data rescaled so that the noise power is one.
pub(crate) struct Normalized {
    pub h: CMat,
    pub p_max: f64,
    pub sigma: f64,
}

impl Normalized {
    pub fn new(h_eff: &CMat, noise_power: f64, p_max: f64) -> Self {
        Normalized { h: h_eff.clone(), p_max: p_max / noise_power, sigma: noise_power.sqrt() }
    }

    pub fn to_raw(&self, bf: &BeamformerSet) -> BeamformerSet {
        let s = Complex64::from(self.sigma);
        BeamformerSet { f_rf: bf.f_rf.clone(), f_bb: &bf.f_bb * s, f_aux: &bf.f_aux * s }
    }
}

fn repaired(bf: &BeamformerSet, p_max: f64, repair: PowerRepair) -> BeamformerSet {
    let pt = bf.precoder().norm_squared();
    let mut out = bf.clone();
    let rescale = match repair {
        PowerRepair::Fill => pt > 0.0,
        PowerRepair::CapOnly => pt > p_max,
    };
    if rescale {
        out.f_bb *= Complex64::from((p_max / pt).sqrt());
    }
    out
}

pub(crate) struct PddRun {
    pub bf: BeamformerSet,
    pub objective_trace: Vec<f64>,
    pub surrogate_trace: Vec<f64>,
    pub sweep_mu: Vec<f64>,
    pub auxiliary_trace: Vec<f64>,
    pub residual: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl PddRun {
    /// `to_raw` maps normalized objective values back to physical units.
    pub fn into_report(
        self,
        metrics: Metrics,
        sigma: f64,
        to_raw: impl Fn(f64) -> f64,
        elapsed: Duration,
    ) -> SolveReport {
        SolveReport {
            objective_trace: self.objective_trace.into_iter().map(to_raw).collect(),
            surrogate_trace: self.surrogate_trace,
            sweep_mu: self.sweep_mu,
            auxiliary_trace: self.auxiliary_trace,
            metrics,
            penalty_residual: self.residual * sigma,
            inner_iterations: self.inner_iterations,
            outer_iterations: self.outer_iterations,
            status: if self.converged { SolveStatus::Converged } else { SolveStatus::NotConverged },
            elapsed,
        }
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(f64::MIN_POSITIVE)
}

/// Runs inner block sweeps at fixed `μ` and shrinks `μ` between outer
/// iterations. The returned beamformers are the best power-repaired iterate.
pub(crate) fn run<S: BlockScheme>(
    scheme: &mut S,
    init: BeamformerSet,
    structure: AnalogStructure,
    p_max: f64,
    ctl: &LoopControl,
    repair: PowerRepair,
) -> Result<PddRun> {
    ctl.validate()?;
    let digital = structure == AnalogStructure::FullyDigital;
    let mut bf = init;
    let mut best = repaired(&bf, p_max, repair);
    let mut best_value = scheme.objective(&best.precoder());
    if !best_value.is_finite() {
        return Err(Error::Numeric("objective at initialization is not finite".into()));
    }
    let mut run = PddRun {
        bf: best.clone(),
        objective_trace: vec![best_value],
        surrogate_trace: vec![],
        sweep_mu: vec![],
        auxiliary_trace: vec![],
        residual: 0.0,
        inner_iterations: 0,
        outer_iterations: 0,
        converged: false,
    };
    let mut mu = if digital { f64::INFINITY } else { ctl.mu_init };
    let mut previous_outer = best_value;

    for outer in 0..ctl.max_outer {
        run.outer_iterations += 1;
        let mut previous = previous_outer;
        let mut inner_converged = false;
        for _ in 0..ctl.max_inner {
            scheme.update_aux_and_f(&mut bf, mu)?;
            if digital {
                bf.f_bb = bf.f_aux.clone();
            } else {
                bf.f_rf = update_f_rf(&bf.f_aux, &bf.f_bb, structure)?;
                bf.f_bb = update_f_bb(&bf.f_aux, &bf.f_rf, structure)?;
            }
            run.inner_iterations += 1;
            run.surrogate_trace.push(scheme.surrogate(&bf, mu));
            run.sweep_mu.push(mu);
            run.auxiliary_trace.push(scheme.auxiliary());

            let candidate = repaired(&bf, p_max, repair);
            let value = scheme.objective(&candidate.precoder());
            if !value.is_finite() {
                return Err(Error::Numeric(format!("objective became {value} at iteration {}", run.inner_iterations)));
            }
            run.objective_trace.push(value);
            if value > best_value {
                best_value = value;
                best = candidate;
            }
            if rel_change(value, previous) <= ctl.inner_tol {
                inner_converged = true;
                break;
            }
            previous = value;
        }
        let value = *run.objective_trace.last().expect("trace is never empty");
        run.residual = (&bf.f_aux - bf.precoder()).norm();
        if digital {
            run.converged = inner_converged;
            break;
        }
        let settled = outer > 0 && rel_change(value, previous_outer) <= ctl.outer_tol;
        if settled && run.residual <= ctl.residual_tol * p_max.sqrt() {
            run.converged = true;
            break;
        }
        previous_outer = value;
        mu *= ctl.mu_decay;
    }
    run.bf = best;
    Ok(run)
}

/// Checks that the surrogate moves in one direction while `μ` is fixed.
#[cfg(test)]
pub(crate) fn assert_surrogate_monotone(report: &SolveReport, maximize: bool) {
    let s = &report.surrogate_trace;
    for i in 1..s.len() {
        if report.sweep_mu[i] != report.sweep_mu[i - 1] {
            continue;
        }
        let slack = 1e-9 * (1.0 + s[i - 1].abs());
        let step = if maximize { s[i - 1] - s[i] } else { s[i] - s[i - 1] };
        assert!(step <= slack, "surrogate moved the wrong way at sweep {i}: {} -> {}", s[i - 1], s[i]);
    }
}
