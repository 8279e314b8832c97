//! Monte Carlo experiment driver and result files.
//!
//! Trial `t` draws its channel from seed `base_seed + t`, and every
//! architecture in the trial sees the same channel, so architectures can be
//! compared pairwise. Rows come out in (trial, architecture, axis value)
//! order whatever the thread count.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ee_solvers::EeOptions;
use crate::hbf_se::SeOptions;
use crate::metrics::{self, PowerModel};
use crate::rc_cod::{run_cod, BeamformingSolver, CodOptions, InnerObjective};
use crate::system_model::{
    apply_selection, fpa_baseline_selection, generate_extended_channel, AnalogStructure, SystemConfig,
};
use crate::{dbm_to_mw, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Transmit power budget in dBm (SE runs use all of it).
    TransmitPower,
    /// Transmit power budget in dBm (EE runs may use less).
    MaxTransmitPower,
    /// Number of users; the RF chain count follows.
    Users,
    Paths,
    AntennaPorts,
    /// `P_max / σ²` in dB at fixed noise power.
    InputSnr,
}

impl SweepAxis {
    fn integral(self) -> bool {
        matches!(self, SweepAxis::Users | SweepAxis::Paths | SweepAxis::AntennaPorts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayKind {
    /// Radiation centers chosen by coordinate descent.
    #[serde(rename = "RCRAA")]
    Rcraa,
    /// Fixed half-wavelength grid.
    #[serde(rename = "FPA")]
    Fpa,
}

impl ArrayKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ArrayKind::Rcraa => "RCRAA",
            ArrayKind::Fpa => "FPA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub array: ArrayKind,
    pub structure: AnalogStructure,
}

impl Architecture {
    pub fn label(&self) -> String {
        format!("{}-{}", self.array.short_name(), self.structure.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "EE")]
    Ee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EeSolver {
    #[serde(rename = "DQTFP")]
    Dqtfp,
    #[serde(rename = "LDTFP")]
    Ldtfp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub power_model: PowerModel,
    /// Propagation paths per user.
    pub paths: usize,
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    pub architectures: Vec<Architecture>,
    pub objective: Objective,
    pub ee_solver: EeSolver,
    pub se_options: SeOptions,
    pub ee_options: EeOptions,
    pub cod: CodOptions,
    pub trials: usize,
    pub base_seed: u64,
    /// Fill `wall_time_ms`; off keeps reruns byte-identical.
    pub record_timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            config: SystemConfig::standard(),
            power_model: PowerModel::default(),
            paths: 4,
            axis: SweepAxis::TransmitPower,
            axis_values: vec![30.0],
            architectures: vec![
                Architecture { array: ArrayKind::Rcraa, structure: AnalogStructure::FullyConnected },
                Architecture { array: ArrayKind::Fpa, structure: AnalogStructure::FullyConnected },
            ],
            objective: Objective::Se,
            ee_solver: EeSolver::Ldtfp,
            se_options: SeOptions::default(),
            ee_options: EeOptions::default(),
            cod: CodOptions::default(),
            trials: 20,
            base_seed: 42,
            record_timing: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.axis_values.is_empty() || self.architectures.is_empty() {
            return Err(Error::Config("axis values and architectures must be non-empty".into()));
        }
        if self.axis_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("axis values must be strictly increasing".into()));
        }
        for &v in &self.axis_values {
            self.configure(v)?.0.validate()?;
        }
        self.power_model.validate()
    }

    /// System configuration and path count at one axis value.
    pub fn configure(&self, value: f64) -> Result<(SystemConfig, usize)> {
        if !value.is_finite() || (self.axis.integral() && (value < 1.0 || value.fract() != 0.0)) {
            return Err(Error::Config(format!("invalid {:?} value {value}", self.axis)));
        }
        let mut config = self.config.clone();
        let mut paths = self.paths;
        match self.axis {
            SweepAxis::TransmitPower | SweepAxis::MaxTransmitPower => config.p_max = dbm_to_mw(value),
            SweepAxis::InputSnr => config.p_max = config.noise_power * 10f64.powf(value / 10.0),
            SweepAxis::Users => {
                config.k_users = value as usize;
                config.n_rf = value as usize;
            }
            SweepAxis::Paths => paths = value as usize,
            SweepAxis::AntennaPorts => config.n_t = value as usize,
        }
        Ok((config, paths))
    }

    fn inner_objective(&self) -> InnerObjective {
        match (self.objective, self.ee_solver) {
            (Objective::Se, _) => InnerObjective::Se(self.se_options),
            (Objective::Ee, EeSolver::Dqtfp) => InnerObjective::EeDqtfp(self.ee_options),
            (Objective::Ee, EeSolver::Ldtfp) => InnerObjective::EeLdtfp(self.ee_options),
        }
    }
}

/// One (trial, architecture, axis value) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub architecture: String,
    pub structure: String,
    pub axis_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub channel_hash: String,
    pub selection: String,
    pub se: f64,
    pub pt: f64,
    pub p_total: f64,
    pub ee: f64,
    /// Inner iterations of the final fixed-selection solve.
    pub iterations: usize,
    /// Coordinate-descent iterations (0 for FPA).
    pub cod_iterations: usize,
    pub wall_time_ms: f64,
    pub converged: bool,
}

impl ResultRow {
    pub fn curve(&self) -> String {
        format!("{}-{}", self.architecture, self.structure)
    }
}

fn run_job(spec: &ExperimentSpec, trial: usize, value: f64) -> Result<Vec<ResultRow>> {
    let (base, paths) = spec.configure(value)?;
    let seed = spec.base_seed + trial as u64;
    let objective = spec.inner_objective();
    let mut rows = Vec::with_capacity(spec.architectures.len());
    for arch in &spec.architectures {
        let config = base.clone().with_structure(arch.structure);
        let channel = generate_extended_channel(&config, paths, seed)?;
        let fpa = fpa_baseline_selection(&config)?;
        let start = Instant::now();
        let (selection, bf, report, cod_iterations, cod_converged) = match arch.array {
            ArrayKind::Fpa => {
                let h = apply_selection(&channel, &fpa, &config)?;
                let (_, bf, report) = objective.solve(&h, &config, &spec.power_model)?;
                (fpa, bf, report, 0, true)
            }
            ArrayKind::Rcraa => {
                let solver = BeamformingSolver { channel: &channel, config: &config, pm: &spec.power_model, objective };
                let out = run_cod(&channel, &config, &solver, Some(fpa), &spec.cod)?;
                let (bf, report) = out.output;
                (out.selection, bf, report, out.report.iterations, out.report.status == crate::SolveStatus::Converged)
            }
        };
        let elapsed = start.elapsed();
        let h = apply_selection(&channel, &selection, &config)?;
        let m = metrics::evaluate(&h, &bf, &config, &spec.power_model)?;
        rows.push(ResultRow {
            architecture: arch.array.short_name().into(),
            structure: arch.structure.short_name().into(),
            axis_value: value,
            trial,
            seed,
            channel_hash: channel.fingerprint(),
            selection: selection.to_string(),
            se: m.se,
            pt: m.pt,
            p_total: m.p_total,
            ee: m.ee,
            iterations: report.inner_iterations,
            cod_iterations,
            wall_time_ms: if spec.record_timing { elapsed.as_secs_f64() * 1e3 } else { 0.0 },
            converged: report.converged() && cod_converged,
        });
    }
    Ok(rows)
}

/// Runs every (trial, axis value) job in parallel and returns the rows in
/// (trial, architecture, axis value) order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.trials).flat_map(|t| (0..spec.axis_values.len()).map(move |a| (t, a))).collect();
    let results: Vec<Vec<ResultRow>> =
        jobs.par_iter().map(|&(t, a)| run_job(spec, t, spec.axis_values[a])).collect::<Result<_>>()?;
    let n_axis = spec.axis_values.len();
    let mut rows = Vec::with_capacity(results.len() * spec.architectures.len());
    for t in 0..spec.trials {
        for arch in 0..spec.architectures.len() {
            for a in 0..n_axis {
                rows.push(results[t * n_axis + a][arch].clone());
            }
        }
    }
    Ok(rows)
}

const HEADER: [&str; 15] = [
    "architecture",
    "structure",
    "axis_value",
    "trial",
    "seed",
    "channel_hash",
    "selection",
    "se",
    "pt",
    "p_total",
    "ee",
    "iterations",
    "cod_iterations",
    "wall_time_ms",
    "converged",
];

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

/// Writes rows as CSV with a header and 17 significant digits per float.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.architecture.clone(),
            r.structure.clone(),
            float(r.axis_value),
            r.trial.to_string(),
            r.seed.to_string(),
            r.channel_hash.clone(),
            r.selection.clone(),
            float(r.se),
            float(r.pt),
            float(r.p_total),
            float(r.ee),
            r.iterations.to_string(),
            r.cod_iterations.to_string(),
            float(r.wall_time_ms),
            r.converged.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// Sample statistics with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyGroup("no samples to summarize".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary { n, mean, stderr: 0.0, ci95_low: mean, ci95_high: mean });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(Summary { n, mean, stderr, ci95_low: mean - t * stderr, ci95_high: mean + t * stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "se")]
    Se,
    #[serde(rename = "ee")]
    Ee,
    #[serde(rename = "pt")]
    Pt,
}

impl Metric {
    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::Se => row.se,
            Metric::Ee => row.ee,
            Metric::Pt => row.pt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Se => "se",
            Metric::Ee => "ee",
            Metric::Pt => "pt",
        }
    }
}

/// Mean of one metric for one curve at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub curve: String,
    pub axis_value: f64,
    pub metric: Metric,
    pub summary: Summary,
}

fn axis_key(v: f64) -> u64 {
    v.to_bits()
}

/// Groups rows by (curve, axis value) in order of first appearance.
pub fn aggregate(rows: &[ResultRow], metric: Metric) -> Result<Vec<CurvePoint>> {
    if rows.is_empty() {
        return Err(Error::EmptyGroup("no rows to aggregate".into()));
    }
    let mut order: Vec<(String, f64)> = vec![];
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.curve(), axis_key(r.axis_value));
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push((r.curve(), r.axis_value));
        }
        entry.push(metric.of(r));
    }
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    order
        .into_iter()
        .map(|(curve, axis_value)| {
            let summary = summarize(&groups[&(curve.clone(), axis_key(axis_value))])?;
            Ok(CurvePoint { curve, axis_value, metric, summary })
        })
        .collect()
}

/// Per-trial relative difference `(a - b) / b` between two curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub candidate: String,
    pub reference: String,
    pub axis_value: f64,
    pub metric: Metric,
    pub relative_difference: Summary,
    /// Trials where the candidate is at least as good as the reference.
    pub wins: usize,
}

/// Pairs every RCRAA curve with the FPA curve of the same structure, and
/// within each array kind compares PC with FC and FC with fully digital.
pub fn paired_comparisons(rows: &[ResultRow], metric: Metric) -> Result<Vec<PairedComparison>> {
    let mut by_key: BTreeMap<(String, u64, usize), f64> = BTreeMap::new();
    let mut curves: Vec<String> = vec![];
    let mut axis: Vec<f64> = vec![];
    for r in rows {
        by_key.insert((r.curve(), axis_key(r.axis_value), r.trial), metric.of(r));
        if !curves.contains(&r.curve()) {
            curves.push(r.curve());
        }
        if !axis.iter().any(|&a| a.to_bits() == r.axis_value.to_bits()) {
            axis.push(r.axis_value);
        }
    }
    axis.sort_by(f64::total_cmp);
    let mut pairs = vec![];
    for s in ["FC", "PC", "FD"] {
        pairs.push((format!("RCRAA-{s}"), format!("FPA-{s}")));
    }
    for a in ["RCRAA", "FPA"] {
        pairs.push((format!("{a}-PC"), format!("{a}-FC")));
        pairs.push((format!("{a}-FC"), format!("{a}-FD")));
    }
    let trials: Vec<usize> = {
        let mut t: Vec<usize> = rows.iter().map(|r| r.trial).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut out = vec![];
    for (cand, reference) in pairs {
        if !curves.contains(&cand) || !curves.contains(&reference) {
            continue;
        }
        for &x in &axis {
            let mut diffs = vec![];
            let mut wins = 0;
            for &t in &trials {
                let a = by_key.get(&(cand.clone(), axis_key(x), t));
                let b = by_key.get(&(reference.clone(), axis_key(x), t));
                if let (Some(&a), Some(&b)) = (a, b) {
                    diffs.push((a - b) / b);
                    if a >= b {
                        wins += 1;
                    }
                }
            }
            if diffs.is_empty() {
                continue;
            }
            out.push(PairedComparison {
                candidate: cand.clone(),
                reference: reference.clone(),
                axis_value: x,
                metric,
                relative_difference: summarize(&diffs)?,
                wins,
            });
        }
    }
    Ok(out)
}

/// Writes per-curve means and paired relative differences for `metrics`
/// into one CSV; `kind` is `curve` or `paired`.
pub fn emit_plotdata(rows: &[ResultRow], metrics: &[Metric], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "kind", "label", "reference", "axis_value", "metric", "n", "mean", "stderr", "ci95_low", "ci95_high", "wins",
    ])
    .map_err(csv_err(path))?;
    for &metric in metrics {
        for p in aggregate(rows, metric)? {
            let s = p.summary;
            w.write_record([
                "curve".into(),
                p.curve,
                String::new(),
                float(p.axis_value),
                metric.name().into(),
                s.n.to_string(),
                float(s.mean),
                float(s.stderr),
                float(s.ci95_low),
                float(s.ci95_high),
                String::new(),
            ])
            .map_err(csv_err(path))?;
        }
        for c in paired_comparisons(rows, metric)? {
            let s = c.relative_difference;
            w.write_record([
                "paired".into(),
                c.candidate,
                c.reference,
                float(c.axis_value),
                metric.name().into(),
                s.n.to_string(),
                float(s.mean),
                float(s.stderr),
                float(s.ci95_low),
                float(s.ci95_high),
                c.wins.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Run description stored next to the CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub rows: usize,
    pub not_converged_rows: usize,
    pub note: String,
}

pub fn write_metadata(spec: &ExperimentSpec, rows: &[ResultRow], path: &Path) -> Result<()> {
    let meta = RunMetadata {
        spec: spec.clone(),
        seeds: (0..spec.trials as u64).map(|t| spec.base_seed + t).collect(),
        rows: rows.len(),
        not_converged_rows: rows.iter().filter(|r| !r.converged).count(),
        note: "Monte Carlo estimates over the listed seeds; figures from other seed sets differ. \
               Compare curves through the confidence intervals and paired differences in the plot data."
            .into(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
