//! Coordinate-descent selection of radiation centers.
//!
//! Each iteration frees one selected RC and tries every feasible
//! replacement, solving the fixed-selection beamforming problem for each
//! candidate. The incumbent's value is cached, and a move needs a strict
//! improvement, so the objective trace never decreases.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ee_solvers::{self, EeOptions};
use crate::hbf_se::{self, SeOptions};
use crate::metrics::{BeamformerSet, PowerModel};
use crate::report::{SolveReport, SolveStatus};
use crate::system_model::{apply_selection, ExtendedChannel, RcSelection, SystemConfig};
use crate::{CMat, Error, Result};

/// Scores a selection; larger is better. Must be deterministic.
pub trait InnerSolver: Sync {
    type Output: Clone + Send;
    fn solve(&self, sel: &RcSelection) -> Result<(f64, Self::Output)>;
}

/// Adapts a plain scoring function.
pub struct FnSolver<F>(pub F);

impl<F> InnerSolver for FnSolver<F>
where
    F: Fn(&RcSelection) -> Result<f64> + Sync,
{
    type Output = ();

    fn solve(&self, sel: &RcSelection) -> Result<(f64, ())> {
        Ok(((self.0)(sel)?, ()))
    }
}

/// Which fixed-selection problem is solved and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InnerObjective {
    Se(SeOptions),
    EeDqtfp(EeOptions),
    EeLdtfp(EeOptions),
}

impl InnerObjective {
    /// Runs the solver and returns the objective value it maximizes.
    pub fn solve(
        &self,
        h_eff: &CMat,
        config: &SystemConfig,
        pm: &PowerModel,
    ) -> Result<(f64, BeamformerSet, SolveReport)> {
        let (bf, report) = match self {
            InnerObjective::Se(o) => hbf_se::solve_se(h_eff, config, pm, o)?,
            InnerObjective::EeDqtfp(o) => ee_solvers::solve_ee_dqtfp(h_eff, config, pm, o)?,
            InnerObjective::EeLdtfp(o) => ee_solvers::solve_ee_ldtfp(h_eff, config, pm, o)?,
        };
        let value = match self {
            InnerObjective::Se(_) => report.metrics.se,
            _ => report.metrics.ee,
        };
        Ok((value, bf, report))
    }
}

/// Beamforming on one channel realization as a function of the selection.
pub struct BeamformingSolver<'a> {
    pub channel: &'a ExtendedChannel,
    pub config: &'a SystemConfig,
    pub pm: &'a PowerModel,
    pub objective: InnerObjective,
}

impl InnerSolver for BeamformingSolver<'_> {
    type Output = (BeamformerSet, SolveReport);

    fn solve(&self, sel: &RcSelection) -> Result<(f64, Self::Output)> {
        let h = apply_selection(self.channel, sel, self.config)?;
        let (value, bf, report) = self.objective.solve(&h, self.config, self.pm)?;
        Ok((value, (bf, report)))
    }
}

/// Greedy start: among the grid `1, 1 + D_min, 1 + 2 D_min, ...` keep the
/// `n_t` points with the largest `Σ_k |h̄[n, k]|`, ties to the lower index.
pub fn init_selection(channel: &ExtendedChannel, config: &SystemConfig) -> Result<RcSelection> {
    if channel.n_em() != config.n_em {
        return Err(Error::Dimension(format!(
            "channel has {} rows, config expects n_em = {}",
            channel.n_em(),
            config.n_em
        )));
    }
    let candidates = candidate_grid(config);
    if candidates.len() < config.n_t {
        return Err(Error::Config(format!(
            "only {} grid candidates for {} ports",
            candidates.len(),
            config.n_t
        )));
    }
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&c| (c, channel.h_bar.row(c - 1).iter().map(|z| z.norm()).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let chosen: Vec<usize> = scored.iter().take(config.n_t).map(|&(c, _)| c).collect();
    RcSelection::from_indices(&chosen, config)
}

/// 1-based candidate indices `(n - 1) D_min + 1` for `n = 1..⌈N_EM / D_min⌉`.
pub fn candidate_grid(config: &SystemConfig) -> Vec<usize> {
    let d = config.d_min();
    (0..config.n_em.div_ceil(d)).map(|n| n * d + 1).collect()
}

/// The incumbent followed by every feasible selection obtained by replacing
/// its `m`-th index (0-based) with another RC, in increasing RC order.
pub fn build_testing_set(current: &RcSelection, m: usize, config: &SystemConfig) -> Result<Vec<RcSelection>> {
    let indices = current.indices();
    if m >= indices.len() {
        return Err(Error::Dimension(format!("coordinate {m} outside 0..{}", indices.len())));
    }
    let mut out = vec![current.clone()];
    for n in 1..=config.n_em {
        if n == indices[m] || indices.contains(&n) {
            continue;
        }
        let mut trial = indices.to_vec();
        trial[m] = n;
        match RcSelection::from_indices(&trial, config) {
            Ok(sel) => out.push(sel),
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodOptions {
    /// Iteration cap in full coordinate cycles (`max_sweeps * n_t`).
    pub max_sweeps: usize,
}

impl Default for CodOptions {
    fn default() -> Self {
        CodOptions { max_sweeps: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct CodReport {
    /// Incumbent value at the start and after every iteration.
    pub trace: Vec<f64>,
    /// Incumbent after every iteration, starting with the initial one.
    pub history: Vec<RcSelection>,
    pub iterations: usize,
    /// Number of distinct selections solved.
    pub evaluations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct CodOutcome<T> {
    pub selection: RcSelection,
    pub value: f64,
    pub output: T,
    pub report: CodReport,
}

/// Runs coordinate descent from `initial`, or from [`init_selection`] when
/// `initial` is `None`. Candidates of one iteration are solved in parallel
/// and reduced in testing-set order.
pub fn run_cod<S: InnerSolver>(
    channel: &ExtendedChannel,
    config: &SystemConfig,
    solver: &S,
    initial: Option<RcSelection>,
    opts: &CodOptions,
) -> Result<CodOutcome<S::Output>> {
    config.validate()?;
    if opts.max_sweeps == 0 {
        return Err(Error::Config("max_sweeps must be positive".into()));
    }
    let start = match initial {
        Some(sel) => {
            if sel.n_em() != config.n_em || sel.indices().len() != config.n_t {
                return Err(Error::Dimension("initial selection does not match config".into()));
            }
            sel
        }
        None => init_selection(channel, config)?,
    };
    let mut cache: HashMap<RcSelection, (f64, S::Output)> = HashMap::new();
    let (value, output) = solver.solve(&start)?;
    check_value(value, &start)?;
    cache.insert(start.clone(), (value, output.clone()));

    let mut incumbent = CodOutcome {
        selection: start.clone(),
        value,
        output,
        report: CodReport {
            trace: vec![value],
            history: vec![start],
            iterations: 0,
            evaluations: 1,
            status: SolveStatus::NotConverged,
        },
    };
    let n_t = config.n_t;
    let cap = opts.max_sweeps * n_t;
    for p in 1..=cap {
        let m = (p - 1) % n_t;
        let testing = build_testing_set(&incumbent.selection, m, config)?;
        let fresh: Vec<&RcSelection> = testing[1..].iter().filter(|s| !cache.contains_key(*s)).collect();
        let solved: Vec<(f64, S::Output)> = fresh.par_iter().map(|s| solver.solve(s)).collect::<Result<_>>()?;
        for (sel, (v, out)) in fresh.into_iter().zip(solved) {
            check_value(v, sel)?;
            incumbent.report.evaluations += 1;
            cache.insert(sel.clone(), (v, out));
        }
        let mut winner: Option<&RcSelection> = None;
        let mut best = incumbent.value;
        for sel in &testing[1..] {
            let v = cache[sel].0;
            if v > best {
                best = v;
                winner = Some(sel);
            }
        }
        if let Some(sel) = winner {
            let (v, out) = cache[sel].clone();
            incumbent.selection = sel.clone();
            incumbent.value = v;
            incumbent.output = out;
        }
        incumbent.report.iterations = p;
        incumbent.report.trace.push(incumbent.value);
        incumbent.report.history.push(incumbent.selection.clone());
        if p > n_t && incumbent.report.history[p] == incumbent.report.history[p - n_t] {
            incumbent.report.status = SolveStatus::Converged;
            break;
        }
    }
    Ok(incumbent)
}

fn check_value(v: f64, sel: &RcSelection) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("inner solver returned {v} for selection {sel}")))
    }
}
