//! Command-line front end for the tri-hybrid beamforming experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trihybrid::harness::{self, EeSolver, ExperimentSpec, Metric, Objective, ResultRow};
use trihybrid::oracles::{exhaustive_rc_opt, DEFAULT_ENUMERATION_CAP};
use trihybrid::rc_cod::{run_cod, BeamformingSolver, InnerObjective};
use trihybrid::system_model::generate_extended_channel;
use trihybrid::SolveStatus;

#[derive(Parser)]
#[command(name = "trihybrid", version, about = "Tri-hybrid beamforming Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral-efficiency maximization over the configured sweep.
    RunSe(Common),
    /// Energy-efficiency maximization over the configured sweep.
    RunEe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Use the sum rate as the Dinkelbach numerator in LDTFP.
        #[arg(long)]
        log_numerator: bool,
    },
    /// Runs the config file as written, objective included.
    Sweep(Common),
    /// Compares coordinate descent with exhaustive selection search on a
    /// small array.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment description; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trial t uses seed + t. [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Result CSV; plot data and metadata are written next to it.
    #[arg(long, default_value = "./results.csv")]
    out: PathBuf,
    /// Monte Carlo trials. [default: 20]
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated sweep values, e.g. 10,20,30.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Record wall times (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Dqtfp,
    Ldtfp,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(values) = &self.values {
            spec.axis_values = values.clone();
        }
        spec.record_timing |= self.timing;
        Ok(spec)
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    out.with_file_name(format!("{stem}_{suffix}"))
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("TRIHYBRID_THREADS") {
        let n: usize = value.trim().parse().with_context(|| format!("TRIHYBRID_THREADS={value}"))?;
        if n == 0 {
            bail!("TRIHYBRID_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn print_summary(rows: &[ResultRow], metric: Metric) -> Result<()> {
    println!("{:<10} {:>10} {:>14} {:>28}", "curve", "axis", metric.name(), "95% CI");
    for p in harness::aggregate(rows, metric)? {
        let s = p.summary;
        println!(
            "{:<10} {:>10} {:>14.6e} [{:>12.6e}, {:>12.6e}]",
            p.curve, p.axis_value, s.mean, s.ci95_low, s.ci95_high
        );
    }
    Ok(())
}

fn run_spec(spec: &ExperimentSpec, out: &Path) -> Result<bool> {
    let rows = harness::run_experiment(spec)?;
    harness::emit_csv(&rows, out)?;
    let plot = sibling(out, "plotdata.csv");
    let meta = sibling(out, "metadata.json");
    harness::emit_plotdata(&rows, &[Metric::Se, Metric::Ee, Metric::Pt], &plot)?;
    harness::write_metadata(spec, &rows, &meta)?;
    let metric = match spec.objective {
        Objective::Se => Metric::Se,
        Objective::Ee => Metric::Ee,
    };
    print_summary(&rows, metric)?;
    let not_converged = rows.iter().filter(|r| !r.converged).count();
    println!("{} rows -> {}, {}, {}", rows.len(), out.display(), plot.display(), meta.display());
    if not_converged > 0 {
        eprintln!("warning: {not_converged} rows did not converge");
    }
    Ok(not_converged == 0)
}

fn oracle_check(spec: &ExperimentSpec, out: &Path) -> Result<bool> {
    spec.validate()?;
    let config = &spec.config;
    let objective = match (spec.objective, spec.ee_solver) {
        (Objective::Se, _) => InnerObjective::Se(spec.se_options),
        (Objective::Ee, EeSolver::Dqtfp) => InnerObjective::EeDqtfp(spec.ee_options),
        (Objective::Ee, EeSolver::Ldtfp) => InnerObjective::EeLdtfp(spec.ee_options),
    };
    let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record([
        "seed",
        "channel_hash",
        "cod_selection",
        "cod_value",
        "best_selection",
        "best_value",
        "relative_gap",
        "cod_evaluations",
        "feasible_selections",
        "cod_converged",
    ])?;
    let mut gaps = vec![];
    let mut all_converged = true;
    for trial in 0..spec.trials {
        let seed = spec.base_seed + trial as u64;
        let channel = generate_extended_channel(config, spec.paths, seed)?;
        let solver = BeamformingSolver { channel: &channel, config, pm: &spec.power_model, objective };
        let oracle = exhaustive_rc_opt(config, &solver, DEFAULT_ENUMERATION_CAP)?;
        let cod = run_cod(&channel, config, &solver, None, &spec.cod)?;
        let gap = (oracle.best_value - cod.value) / oracle.best_value.abs();
        let converged = cod.report.status == SolveStatus::Converged;
        all_converged &= converged;
        gaps.push(gap);
        w.write_record([
            seed.to_string(),
            channel.fingerprint(),
            cod.selection.to_string(),
            format!("{:.16e}", cod.value),
            oracle.best_selection.to_string(),
            format!("{:.16e}", oracle.best_value),
            format!("{:.16e}", gap),
            cod.report.evaluations.to_string(),
            oracle.evaluated_count.to_string(),
            converged.to_string(),
        ])?;
    }
    w.flush()?;
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let exact = gaps.iter().filter(|g| **g <= 1e-12).count();
    println!(
        "{} seeds: median relative gap {:.3}%, worst {:.3}%, optimum found on {exact} -> {}",
        gaps.len(),
        100.0 * median,
        100.0 * gaps[gaps.len() - 1],
        out.display()
    );
    Ok(all_converged)
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::RunSe(common) => {
            let mut spec = common.spec()?;
            spec.objective = Objective::Se;
            run_spec(&spec, &common.out)
        }
        Command::RunEe { common, solver, log_numerator } => {
            let mut spec = common.spec()?;
            spec.objective = Objective::Ee;
            match solver {
                Some(SolverArg::Dqtfp) => spec.ee_solver = EeSolver::Dqtfp,
                Some(SolverArg::Ldtfp) => spec.ee_solver = EeSolver::Ldtfp,
                None => {}
            }
            spec.ee_options.dinkelbach_log_numerator |= log_numerator;
            run_spec(&spec, &common.out)
        }
        Command::Sweep(common) => run_spec(&common.spec()?, &common.out),
        Command::OracleCheck(common) => oracle_check(&common.spec()?, &common.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
