//! Build, solve, simulate and write the artifact bundle.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use kalmdp::abstraction::{build_adaptive, build_base, build_two_phase, StructuralReport};
use kalmdp::prism::to_prism;
use kalmdp::runtime::{simulate, write_heatmap, write_trajectories, Controller, SimOptions};
use kalmdp::solver::{robust_value_iteration, write_values_csv, SolveOptions, ValueTable};
use kalmdp::{Imdp, Partition, Phase};
use serde::Serialize;
use tempfile::TempDir;

use crate::config::{sub_seed, Resolved, RunConfig};
use crate::CliError;

pub const PRISM_PREFIX: &str = "model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    ExportPrism,
    Simulate,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Run => "run",
            Verb::ExportPrism => "export-prism",
            Verb::Simulate => "simulate",
        }
    }
}

/// Files are written to a scratch directory next to the output directory
/// and only moved into place once everything succeeded.
struct Staging {
    dir: TempDir,
    files: Vec<String>,
}

impl Staging {
    fn new(out_dir: &Path) -> Result<Self, CliError> {
        let parent = match out_dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new().prefix(".kalmdp-staging-").tempdir_in(&parent)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
        let mut out = BufWriter::new(fs::File::create(self.dir.path().join(name))?);
        body(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
            Ok(())
        })
    }

    fn commit(self, out_dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out_dir)?;
        for f in &self.files {
            fs::rename(self.dir.path().join(f), out_dir.join(f))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub build_s: f64,
    pub solve_s: f64,
    pub simulate_s: f64,
    pub write_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub benchmark: String,
    pub regions: usize,
    pub layers: LayerCounts,
    #[serde(flatten)]
    pub counts: StructuralReport,
    pub correct: bool,
    pub epsilons: Vec<f64>,
    pub adaptive_depths: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LayerCounts {
    pub transient: usize,
    pub steady: usize,
    pub adaptive: usize,
}

impl Report {
    pub fn new(name: &str, imdp: &Imdp) -> Self {
        let mut layers = LayerCounts::default();
        for l in imdp.layers() {
            match l {
                Phase::Transient(_) => layers.transient += 1,
                Phase::Steady => layers.steady += 1,
                Phase::Adaptive { .. } => layers.adaptive += 1,
            }
        }
        Self {
            benchmark: name.to_string(),
            regions: imdp.regions(),
            layers,
            counts: imdp.report(),
            correct: imdp.info.correct,
            epsilons: imdp.info.epsilons.clone(),
            adaptive_depths: imdp.info.adaptive_depths.clone(),
            warnings: imdp.info.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRun {
    pub region: usize,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub empirical_rate: f64,
    pub guaranteed_lower_bound: f64,
    pub margin: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub beta: f64,
    pub confidence: f64,
    pub runs: Vec<SimRun>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub tool_version: String,
    pub library_version: String,
    pub config: RunConfig,
    pub qmc_seed: u64,
    pub simulation_seed: u64,
    pub artifacts: Vec<String>,
    pub timings: Timings,
}

pub fn partition(res: &Resolved) -> Result<Partition, CliError> {
    Ok(Partition::uniform(&res.spec.system.state_domain, &res.grid)?)
}

pub fn build(res: &Resolved, partition: &Partition) -> Result<Imdp, CliError> {
    let imdp = if res.config.adaptive {
        build_adaptive(&res.spec, partition, &res.horizon, &res.build)?
    } else if res.config.two_phase {
        build_two_phase(&res.spec, partition, &res.horizon, &res.build)?
    } else {
        build_base(&res.spec, partition, &res.build)?
    };
    Ok(imdp)
}

pub fn solve(imdp: &Imdp) -> Result<ValueTable, CliError> {
    Ok(robust_value_iteration(imdp, &SolveOptions::default())?)
}

fn best_region(imdp: &Imdp, table: &ValueTable) -> Result<usize, CliError> {
    let mut best = (0, f64::NEG_INFINITY);
    for r in 0..imdp.regions() {
        let v = table.values[imdp.initial_state(r)?];
        if v > best.1 {
            best = (r, v);
        }
    }
    Ok(best.0)
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Runs `verb` and moves its artifacts into the output directory.
/// Nothing is left behind when any step fails.
pub fn run(res: &Resolved, verb: Verb) -> Result<Report, CliError> {
    let start = Instant::now();
    let mut timings = Timings::default();
    let mut staging = Staging::new(&res.out_dir)?;

    let partition = partition(res)?;
    let t = Instant::now();
    let imdp = build(res, &partition)?;
    timings.build_s = secs(t);
    let report = Report::new(&res.spec.name, &imdp);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    let mut write_time = 0.0;
    let t = Instant::now();
    staging.write_json("report.json", &report)?;
    if verb != Verb::Simulate {
        let model = to_prism(&imdp);
        staging.write(&format!("{PRISM_PREFIX}.sta"), |out| Ok(model.write_states(out)?))?;
        staging.write(&format!("{PRISM_PREFIX}.tra"), |out| Ok(model.write_transitions(out)?))?;
    }
    write_time += secs(t);

    if verb != Verb::ExportPrism {
        let t = Instant::now();
        let table = solve(&imdp)?;
        timings.solve_s = secs(t);

        let t = Instant::now();
        if verb == Verb::Run {
            staging.write("values.csv", |out| Ok(write_values_csv(&imdp, &table, out)?))?;
            staging.write("heatmap.csv", |out| Ok(write_heatmap(&partition, &imdp, &table, out)?))?;
        }
        write_time += secs(t);

        if res.config.simulate {
            let t = Instant::now();
            let controller = Controller::new(&res.spec, &partition, &imdp, &table)?;
            let mut runs = Vec::new();
            let mut confidence = 1.0;
            let mut regions = res.config.sim_regions.clone();
            if regions.is_empty() {
                regions.push(best_region(&imdp, &table)?);
            }
            for region in regions {
                let opts = SimOptions {
                    trials: res.config.trials,
                    seed: sub_seed(res.sim_seed, &format!("region-{region}")),
                    record_trajectories: res.config.trajectories,
                    noiseless: false,
                };
                let sim = simulate(&controller, region, res.build.beta, &opts)?;
                if !sim.consistent() {
                    eprintln!(
                        "warning: region {region}: empirical rate {:.4} below guaranteed bound {:.4} by more than {:.4}",
                        sim.empirical_rate,
                        sim.guaranteed_lower_bound,
                        sim.margin()
                    );
                }
                confidence = sim.confidence;
                if let Some(points) = &sim.trajectories {
                    staging.write(&format!("trajectories_r{region}.csv"), |out| Ok(write_trajectories(points, out)?))?;
                }
                runs.push(SimRun {
                    region,
                    seed: opts.seed,
                    trials: sim.trials,
                    successes: sim.successes,
                    empirical_rate: sim.empirical_rate,
                    guaranteed_lower_bound: sim.guaranteed_lower_bound,
                    margin: sim.margin(),
                    consistent: sim.consistent(),
                });
            }
            staging.write_json("simulation.json", &SimSummary { beta: res.build.beta, confidence, runs })?;
            timings.simulate_s = secs(t);
        }
    }

    timings.write_s = write_time;
    timings.total_s = secs(start);
    let mut artifacts = staging.files.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        manifest_version: 1,
        command: verb.name().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: kalmdp::VERSION.into(),
        config: res.config.clone(),
        qmc_seed: res.build.prob.seed,
        simulation_seed: res.sim_seed,
        artifacts,
        timings,
    };
    staging.write_json("manifest.json", &manifest)?;
    staging.commit(&res.out_dir)?;
    Ok(report)
}
