//! Brute-force references: exhaustive RC enumeration and finite-difference
//! gradients.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::rc_cod::InnerSolver;
use crate::system_model::{RcSelection, SystemConfig};
use crate::{CVec, Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

/// Result of scoring every feasible selection.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub best_value: f64,
    pub best_selection: RcSelection,
    pub evaluated_count: usize,
    /// Value of each selection, in lexicographic order.
    pub values: Vec<f64>,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of feasible selections: `C(N_EM - (N_T - 1)(D_min - 1), N_T)`.
pub fn feasible_count(config: &SystemConfig) -> u128 {
    let d = config.d_min().min(config.n_em).max(1) as u128;
    let (n, k) = (config.n_em as u128, config.n_t as u128);
    if k == 0 {
        return 1;
    }
    match n.checked_sub((k - 1) * (d - 1)) {
        Some(free) => binomial(free, k),
        None => 0,
    }
}

/// Every feasible selection in lexicographic order of the index sets.
pub fn enumerate_feasible(config: &SystemConfig, cap: usize) -> Result<Vec<RcSelection>> {
    let count = feasible_count(config);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let d = config.d_min().min(config.n_em).max(1);
    let mut out = Vec::with_capacity(count as usize);
    let mut current = Vec::with_capacity(config.n_t);
    extend(&mut current, 1, config, d, &mut out)?;
    Ok(out)
}

fn extend(
    current: &mut Vec<usize>,
    from: usize,
    config: &SystemConfig,
    d: usize,
    out: &mut Vec<RcSelection>,
) -> Result<()> {
    if current.len() == config.n_t {
        out.push(RcSelection::from_indices(current, config)?);
        return Ok(());
    }
    let remaining = config.n_t - current.len() - 1;
    let last = config.n_em.saturating_sub(remaining * d);
    for n in from..=last {
        current.push(n);
        extend(current, n + d, config, d, out)?;
        current.pop();
    }
    Ok(())
}

/// Scores every feasible selection with `solver` and returns the maximum;
/// ties go to the lexicographically first selection.
pub fn exhaustive_rc_opt<S: InnerSolver>(config: &SystemConfig, solver: &S, cap: usize) -> Result<OracleReport> {
    let all = enumerate_feasible(config, cap)?;
    if all.is_empty() {
        return Err(Error::Config("no feasible selection exists".into()));
    }
    let values: Vec<f64> = all.par_iter().map(|s| solver.solve(s).map(|(v, _)| v)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(OracleReport {
        best_value: values[best],
        best_selection: all[best].clone(),
        evaluated_count: all.len(),
        values,
    })
}

/// Central-difference Wirtinger gradient `∂f/∂x^* = (∂f/∂Re x + j ∂f/∂Im x) / 2`.
pub fn finite_difference_gradient<F>(objective: F, x: &CVec, step: f64) -> Result<CVec>
where
    F: Fn(&CVec) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let eval = |p: &CVec| {
        let v = objective(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("objective evaluated to {v}")))
        }
    };
    let mut grad = CVec::zeros(x.len());
    let mut p = x.clone();
    for i in 0..x.len() {
        let mut partial = [0.0; 2];
        for (part, dir) in [Complex64::new(step, 0.0), Complex64::new(0.0, step)].into_iter().enumerate() {
            p[i] = x[i] + dir;
            let plus = eval(&p)?;
            p[i] = x[i] - dir;
            let minus = eval(&p)?;
            p[i] = x[i];
            partial[part] = (plus - minus) / (2.0 * step);
        }
        grad[i] = Complex64::new(partial[0], partial[1]) * 0.5;
    }
    Ok(grad)
}
