//! `kalmdp`: build, solve, verify and simulate filter-based interval MDP
//! abstractions from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 invariant failure.

mod config;
mod pipeline;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{BenchmarkSource, RunConfig, OUT_ENV};
use pipeline::Verb;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] kalmdp::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invariant failure:\n  {}", .0.join("\n  "))]
    Invariant(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(kalmdp::Error::Config(_)) => 1,
            CliError::Invariant(_)
            | CliError::Core(kalmdp::Error::Integrity(_))
            | CliError::Core(kalmdp::Error::Controller(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kalmdp", version, about = "Reach-avoid planning for noisy linear systems via interval MDP abstractions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build, solve and simulate; writes the full artifact bundle.
    Run(RunArgs),
    /// Run the invariant suites on the configured problem.
    Verify(VerifyArgs),
    /// Build the abstraction and write it as a `.sta`/`.tra` pair.
    ExportPrism(RunArgs),
    /// Build, solve and simulate; writes the simulation report only.
    Simulate(RunArgs),
}

/// Flags override the matching fields of the config file.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file (a run manifest is accepted as well).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in benchmark: double-integrator, motion-2d or motion-3d.
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    noise_scale: Option<f64>,
    /// Cells per axis: one count for every axis or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Horizon N in decision steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Enables the two-phase horizon with this many transient steps.
    #[arg(long)]
    nbar: Option<usize>,
    /// Enables adaptive measurement with these rates.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<usize>>,
    #[arg(long)]
    gamma_max: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    qmc_points: Option<usize>,
    #[arg(long)]
    qmc_shifts: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    prune_below: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Regions whose centers start the simulated trials.
    #[arg(long, value_delimiter = ',')]
    sim_regions: Option<Vec<usize>>,
    /// Skip the closed-loop simulation.
    #[arg(long)]
    no_simulate: bool,
    /// Also write per-step trajectories.
    #[arg(long)]
    trajectories: bool,
    #[arg(long, short, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    inject_fault: Option<verify::Fault>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(b) = &self.benchmark {
            c.benchmark = BenchmarkSource::Named(b.clone());
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(noise_scale, gamma_max, beta, theta, qmc_points, qmc_shifts, prune_below, seed, trials, sim_regions);
        if self.grid.is_some() {
            c.grid = self.grid.clone();
        }
        if self.horizon.is_some() {
            c.horizon = self.horizon;
        }
        if self.nbar.is_some() {
            c.nbar = self.nbar;
            c.two_phase = true;
        }
        if let Some(r) = &self.rates {
            c.rates = r.clone();
            c.adaptive = true;
        }
        if self.no_simulate {
            c.simulate = false;
        }
        if self.trajectories {
            c.trajectories = true;
        }
        if self.out.is_some() {
            c.out_dir = self.out.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        Ok(c)
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(vec![format!("cannot start {n} worker threads: {e}")]))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify(args) => {
            let res = args.run.config()?.resolve()?;
            init_threads(res.config.threads)?;
            let summary = verify::verify(&res, args.inject_fault)?;
            for s in &summary.suites {
                println!("{} {:<22} {:>7.2}s  {}", if s.passed { "PASS" } else { "FAIL" }, s.suite, s.seconds, s.detail);
            }
            println!("{}", serde_json::to_string(&summary)?);
            if !summary.passed {
                let failed = summary.suites.iter().filter(|s| !s.passed).map(|s| format!("{}: {}", s.suite, s.detail));
                return Err(CliError::Invariant(failed.collect()));
            }
            Ok(())
        }
        Command::Run(args) => execute(&args, Verb::Run),
        Command::ExportPrism(args) => execute(&args, Verb::ExportPrism),
        Command::Simulate(args) => execute(&args, Verb::Simulate),
    }
}

fn execute(args: &RunArgs, verb: Verb) -> Result<(), CliError> {
    let res = args.config()?.resolve()?;
    init_threads(res.config.threads)?;
    let report = pipeline::run(&res, verb)?;
    println!(
        "{}: {} states, {} choices, {} transitions -> {}",
        report.benchmark,
        report.counts.states,
        report.counts.choices,
        report.counts.transitions,
        res.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
