//! `randswitch` subcommands.
//!
//! Exit codes: 0 success, 1 invalid input (scenario, flags), 2 runtime
//! failure or a failed reproduction threshold.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use randswitch_core::{DwellModel, GENERATOR_ID};
use thiserror::Error;

use crate::output::{self, OutputDir, PathwiseSummary, Provenance, VERSION};
use crate::pipeline::{self, BoundsSource, PipelineError};
use crate::repro;
use crate::scenario::{load_scenario, Scenario, ScenarioError};

#[derive(Debug, Parser)]
#[command(name = "randswitch", version, about = "Randomly switched time-varying ODE simulator and stability checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file, or the name of a built-in scenario.
    #[arg(long)]
    pub scenario: String,
    #[command(flatten)]
    pub run: RunArgs,
    /// Override the simulation horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Override the integration step.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory.
    #[arg(long, env = "RANDSWITCH_OUT", default_value = "randswitch-out")]
    pub out: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bounds {
    /// The scenario's `analysis.reference_bounds`.
    Paper,
    /// Monte Carlo grid maxima from `estimate-musf`.
    Estimated,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one replication: switching path, trajectory, pathwise estimate.
    Simulate(Common),
    /// Simulate many replications in parallel.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = repro::DEFAULT_REPS)]
        reps: usize,
    },
    /// Check the Lyapunov conditions on the sampled region.
    CheckLyapunov(Common),
    /// Estimate E[int_t^{t+S} lambda_i] per mode and classify it.
    EstimateMusf(Common),
    /// Evaluate the stability criterion for the scenario's switching law.
    Criteria {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "paper")]
        bounds: Bounds,
    },
    /// Run the bundled three-mode example end to end and check its thresholds.
    ReproduceExample1 {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = repro::DEFAULT_REPS)]
        reps: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Usage(_) => 1,
            CliError::Pipeline(_) | CliError::Io(_) | CliError::Failed(_) => 2,
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::Ensemble { common, reps } => ensemble(&common, reps),
        Command::CheckLyapunov(c) => check_lyapunov(&c),
        Command::EstimateMusf(c) => estimate_musf(&c),
        Command::Criteria { common, bounds } => criteria(&common, bounds),
        Command::ReproduceExample1 { run, reps } => reproduce(&run, reps),
    }
}

fn prepare(c: &Common, command: &str) -> Result<(Scenario, OutputDir), CliError> {
    let scn = load_scenario(&c.scenario)?.with_seed(c.run.seed).with_horizon(c.horizon)?.with_step(c.step)?;
    for (mode, t) in &scn.equilibrium_warnings {
        eprintln!("warning: mode {} has f(t, 0) != 0 at t = {t}; x = 0 is not an equilibrium", mode + 1);
    }
    let out = OutputDir::create(&c.run.out)?;
    let manifest = format!(
        "randswitch {VERSION}\ncommand: {command}\nscenario: {} sha256={}\nseed: {}\nrng: {GENERATOR_ID}\n",
        scn.name, scn.sha256, scn.seed
    );
    print!("{manifest}");
    println!("output: {}", out.path().display());
    out.write("manifest.txt", &manifest)?;
    Ok((scn, out))
}

fn simulate(c: &Common) -> Result<(), CliError> {
    let (scn, out) = prepare(c, "simulate")?;
    let prov = Provenance::of(&scn);
    let sim = pipeline::simulate(&scn)?;
    out.write("path.csv", &output::path_csv(&prov, &sim.path))?;
    out.write("trajectory.csv", &output::trajectory_csv(&prov, &sim.trajectory))?;
    out.write("pathwise.txt", &output::condition_text(&sim.pathwise))?;
    let norms = sim.trajectory.norms();
    println!("switches: {}", sim.path.times().len());
    println!("terminal norm: {:e}", norms.last().copied().unwrap_or(f64::NAN));
    print!("{}", output::condition_text(&sim.pathwise));
    Ok(())
}

fn ensemble(c: &Common, reps: usize) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    let (scn, out) = prepare(c, "ensemble")?;
    let prov = Provenance::of(&scn);
    let run = pipeline::ensemble(&scn, reps, true)?;
    let stats = &run.stats;
    out.write("replications.csv", &output::replications_csv(&prov, stats))?;
    out.write("mean_square.csv", &output::mean_square_csv(&prov, stats))?;
    out.write(
        "occupancy.csv",
        &output::occupancy_csv(&prov, &stats.grid, &stats.occupancy, stats.occupancy_error.as_deref()),
    )?;
    out.write("pathwise.csv", &output::pathwise_csv(&prov, &run.pathwise))?;
    println!(
        "replications: {reps} ({} completed, {} aborted, {} underflowed)",
        stats.completed, stats.aborted, stats.underflowed
    );
    let small = stats.replications.iter().filter(|r| r.terminal_norm < 1e-2).count();
    let negative = stats.replications.iter().filter(|r| r.lyap_slope.is_some_and(|s| s < 0.0)).count();
    println!("terminal norm < 1e-2: {small}/{reps}; negative Lyapunov slope: {negative}/{reps}");
    println!("mean square at t = {}: {:e}", scn.t_end(), stats.mean_square.last().copied().unwrap_or(f64::NAN));
    if let Some(err) = stats.occupancy_error.as_deref().and_then(|e| e.last()) {
        println!("occupancy max error at t = {}: {err:.4}", scn.t_end());
    }
    println!("{}", pathwise_line(&run.pathwise));
    Ok(())
}

fn pathwise_line(rows: &[PathwiseSummary]) -> String {
    let violations: usize = rows.iter().map(|p| p.violations).sum();
    let failing = rows.iter().filter(|p| p.violations > 0).count();
    let unchecked = rows.iter().filter(|p| p.error.is_some()).count();
    format!("pathwise estimate: {violations} violations in {failing} replications; {unchecked} unchecked")
}

fn check_lyapunov(c: &Common) -> Result<(), CliError> {
    let (scn, out) = prepare(c, "check-lyapunov")?;
    let prov = Provenance::of(&scn);
    let reports = pipeline::lyapunov_checks(&scn, &scn.lyapunov)?;
    let text: String = reports.iter().map(output::condition_text).collect();
    out.write("lyapunov.txt", &text)?;
    out.write("violations.csv", &output::violations_csv(&prov, scn.dimension, &reports))?;
    print!("{text}");
    Ok(())
}

pub fn dwell_label(d: &DwellModel) -> String {
    match d {
        DwellModel::Exponential { rate } => format!("exponential(rate {rate})"),
        DwellModel::Deterministic { duration } => format!("deterministic({duration})"),
        DwellModel::Uniform { low, high } => format!("uniform({low}, {high})"),
        DwellModel::Gamma { shape, scale } => format!("gamma(shape {shape}, scale {scale})"),
    }
}

fn estimate_musf(c: &Common) -> Result<(), CliError> {
    let (scn, out) = prepare(c, "estimate-musf")?;
    let prov = Provenance::of(&scn);
    let estimates = pipeline::estimate_musf(&scn)?;
    let reference = scn.analysis.reference_bounds.as_ref();
    let mut s = String::new();
    writeln!(
        s,
        "{:>4}  {:<24}  {:>12}  {:>12}  {:>10}  {:>10}  {:>12}  class",
        "mode", "dwell", "M_hat", "lambda_bar", "argmax_t", "se_max", "reference"
    )
    .unwrap();
    for e in &estimates {
        out.write(&format!("musf_mode{}.csv", e.mode + 1), &output::musf_csv(&prov, &e.class.evidence))?;
        let se_max = e.class.evidence.std_error.iter().copied().fold(0.0, f64::max);
        let lambda_bar = format!("{:.6}", e.class.lambda_bar);
        let refv = reference
            .and_then(|b| b.0.get(e.mode))
            .map(|b| format!("{} {}", b.kind, b.value))
            .unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{:>4}  {:<24}  {:>12.6}  {:>12}  {:>10.4}  {:>10.2e}  {:>12}  {}",
            e.mode + 1,
            dwell_label(&e.dwell),
            e.class.m_hat,
            lambda_bar,
            e.class.argmax_t,
            se_max,
            refv,
            e.class.label()
        )
        .unwrap();
        for n in &e.class.notes {
            writeln!(s, "      note: {n}").unwrap();
        }
    }
    out.write("musf.txt", &s)?;
    print!("{s}");
    Ok(())
}

fn criteria(c: &Common, bounds: Bounds) -> Result<(), CliError> {
    let (scn, out) = prepare(c, "criteria")?;
    let prov = Provenance::of(&scn);
    let source = match bounds {
        Bounds::Paper => BoundsSource::Paper,
        Bounds::Estimated => BoundsSource::Estimated,
    };
    if source == BoundsSource::Paper && scn.analysis.reference_bounds.is_none() {
        return Err(CliError::Usage("--bounds paper needs analysis.reference_bounds in the scenario".into()));
    }
    let outcome = pipeline::criteria(&scn, source, None)?;
    let mut reports = vec![outcome.main.clone()];
    reports.extend(outcome.time_invariant.clone());
    out.write("criteria.csv", &output::criteria_csv(&prov, &reports))?;
    let mut text: String = reports.iter().map(output::criteria_table).collect();
    match outcome.ges_bound {
        Some(b) => writeln!(text, "exponential rate bound: {b:.4}").unwrap(),
        None => writeln!(text, "exponential rate bound: none").unwrap(),
    }
    for cav in &outcome.caveats {
        writeln!(text, "caveat: {cav}").unwrap();
    }
    out.write("criteria.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn reproduce(run: &RunArgs, reps: usize) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    let out = OutputDir::create(&run.out)?;
    let manifest = repro::reproduce_example1(&out, run.seed, reps)?;
    print!("{}", manifest.render());
    println!("output: {}", out.path().display());
    if manifest.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = manifest.checks.iter().filter(|c| !c.passed).map(|c| c.id).collect();
        Err(CliError::Failed(format!("thresholds not met: {}", failed.join("; "))))
    }
}
