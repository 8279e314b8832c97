use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    /// An iteration budget ran out; the result is the best iterate seen.
    NotConverged,
}

/// What a solver did and where it ended.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// True objective (SE in bits/s/Hz or EE in bits/s/Hz per mW) of the
    /// realizable precoder after each inner iteration, starting with the
    /// initialization.
    pub objective_trace: Vec<f64>,
    /// Penalized surrogate after each full block sweep, in the solver's
    /// normalized units (noise power 1, circuit power 1).
    pub surrogate_trace: Vec<f64>,
    /// Penalty coefficient in force for each surrogate entry.
    pub sweep_mu: Vec<f64>,
    /// Auxiliary fractional-programming variable per sweep (ρ or ω).
    pub auxiliary_trace: Vec<f64>,
    pub metrics: Metrics,
    /// `‖F - F_RF F_BB‖_F` at the last iterate, in √mW.
    pub penalty_residual: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub status: SolveStatus,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Mean wall time per inner iteration.
    pub fn time_per_iteration(&self) -> Duration {
        if self.inner_iterations == 0 {
            self.elapsed
        } else {
            self.elapsed / self.inner_iterations as u32
        }
    }
}
