//! Run configuration: JSON file, command-line overrides and validation.

use std::fs;
use std::path::{Path, PathBuf};

use kalmdp::abstraction::{BuildConfig, HorizonSpec};
use kalmdp::model::rediscretize;
use kalmdp::{Benchmark, BenchmarkSpec, Gaussian, Hyperrect, LtiSystem, ProbConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "KALMDP_OUT";

/// Either a built-in benchmark name or a full problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchmarkSource {
    Named(String),
    Inline(Box<InlineBenchmark>),
}

/// A box bound: a number or one of the strings `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Num(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InfText {
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "-inf")]
    NegInf,
}

impl Bound {
    fn value(self) -> f64 {
        match self {
            Bound::Num(x) => x,
            Bound::Text(InfText::Inf) => f64::INFINITY,
            Bound::Text(InfText::NegInf) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineBox {
    pub lo: Vec<Bound>,
    pub hi: Vec<Bound>,
}

impl InlineBox {
    fn to_rect(&self) -> kalmdp::Result<Hyperrect> {
        Hyperrect::new(self.lo.iter().map(|b| b.value()).collect(), self.hi.iter().map(|b| b.value()).collect())
    }
}

/// User-defined problem. Matrices are given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineBenchmark {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub process_noise_mean: Option<Vec<f64>>,
    pub process_noise_cov: Vec<Vec<f64>>,
    pub meas_noise_cov: Vec<Vec<f64>>,
    pub control_box: InlineBox,
    pub state_domain: InlineBox,
    pub initial_cov: Vec<Vec<f64>>,
    pub horizon: usize,
    pub goal_regions: Vec<InlineBox>,
    #[serde(default)]
    pub critical_regions: Vec<InlineBox>,
    pub grid: Vec<usize>,
    /// Merge this many base steps into one decision step.
    #[serde(default = "one")]
    pub merge_steps: usize,
}

fn one() -> usize {
    1
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(format!("benchmark.{name}: expected a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl InlineBenchmark {
    fn to_spec(&self) -> Result<BenchmarkSpec, Vec<String>> {
        let mut errors = Vec::new();
        let mut mat = |name: &str, rows: &[Vec<f64>]| match matrix(name, rows) {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(e);
                None
            }
        };
        let (a, b, c) = (mat("a", &self.a), mat("b", &self.b), mat("c", &self.c));
        let (w, v, s0) = (
            mat("process_noise_cov", &self.process_noise_cov),
            mat("meas_noise_cov", &self.meas_noise_cov),
            mat("initial_cov", &self.initial_cov),
        );
        if self.merge_steps == 0 {
            errors.push("benchmark.merge_steps must be positive".into());
        }
        let (Some(a), Some(b), Some(c), Some(w), Some(v), Some(s0)) = (a, b, c, w, v, s0) else {
            return Err(errors);
        };
        if !errors.is_empty() {
            return Err(errors);
        }
        let build = || -> kalmdp::Result<BenchmarkSpec> {
            let mean = match &self.process_noise_mean {
                Some(m) => DVector::from_vec(m.clone()),
                None => DVector::zeros(w.nrows()),
            };
            let sys = LtiSystem::new(
                a,
                b,
                c,
                Gaussian::new(mean, w)?,
                v,
                self.control_box.to_rect()?,
                self.state_domain.to_rect()?,
            )?;
            let system = if self.merge_steps > 1 { rediscretize(&sys, self.merge_steps)?.lifted().clone() } else { sys };
            let spec = BenchmarkSpec {
                name: self.name.clone(),
                initial_belief: Gaussian::zero_mean(s0)?,
                system,
                horizon: self.horizon,
                goal_regions: self.goal_regions.iter().map(InlineBox::to_rect).collect::<kalmdp::Result<_>>()?,
                critical_regions: self.critical_regions.iter().map(InlineBox::to_rect).collect::<kalmdp::Result<_>>()?,
                noise_scale: 1.0,
                grid: self.grid.clone(),
            };
            spec.validate()?;
            Ok(spec)
        };
        build().map_err(|e| vec![format!("benchmark: {e}")])
    }
}

/// Everything a run needs. Unset optional fields fall back to the
/// benchmark's own defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkSource,
    /// Scales both noise covariances of the motion benchmarks.
    pub noise_scale: f64,
    /// Cells per state axis; a single entry applies to every axis.
    pub grid: Option<Vec<usize>>,
    /// Horizon `N` in decision steps.
    pub horizon: Option<usize>,
    pub two_phase: bool,
    pub nbar: Option<usize>,
    pub adaptive: bool,
    pub rates: Vec<usize>,
    pub gamma_max: usize,
    pub beta: f64,
    pub theta: f64,
    pub qmc_points: usize,
    pub qmc_shifts: usize,
    pub prune_below: f64,
    /// Root seed; QMC and simulation draw from sub-streams of it.
    pub seed: u64,
    pub simulate: bool,
    pub trials: usize,
    /// Regions whose centers start the simulated trials; empty selects the
    /// region with the highest lower bound.
    pub sim_regions: Vec<usize>,
    pub trajectories: bool,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prob = ProbConfig::default();
        Self {
            benchmark: BenchmarkSource::Named(Benchmark::DoubleIntegrator.name().into()),
            noise_scale: 1.0,
            grid: None,
            horizon: None,
            two_phase: false,
            nbar: None,
            adaptive: false,
            rates: Vec::new(),
            gamma_max: 10,
            beta: BuildConfig::default().beta,
            theta: prob.theta,
            qmc_points: prob.qmc_points,
            qmc_shifts: prob.qmc_shifts,
            prune_below: prob.prune_below,
            seed: 0,
            simulate: true,
            trials: 1000,
            sim_regions: Vec::new(),
            trajectories: false,
            out_dir: None,
            threads: None,
        }
    }
}

/// A validated configuration with everything resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub spec: BenchmarkSpec,
    pub grid: Vec<usize>,
    pub horizon: HorizonSpec,
    pub build: BuildConfig,
    pub out_dir: PathBuf,
    pub sim_seed: u64,
}

/// Derives an independent seed for the named sub-stream.
pub fn sub_seed(root: u64, stream: &str) -> u64 {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(root);
    let id = stream.bytes().fold(0u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    rng.set_stream(id);
    rng.next_u64()
}

impl RunConfig {
    /// Reads a config file. A run manifest is accepted too and its `config`
    /// entry is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        let value = match value.get("config") {
            Some(inner) if value.get("manifest_version").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))
    }

    /// Checks every field and reports all problems together.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errors.push(msg);
            }
        };
        check(self.noise_scale > 0.0 && self.noise_scale.is_finite(), format!("noise_scale must be positive, got {}", self.noise_scale));
        check(self.beta > 0.0 && self.beta < 1.0, format!("beta must lie in (0, 1), got {}", self.beta));
        check(self.theta > 0.0 && self.theta < 1.0, format!("theta must lie in (0, 1), got {}", self.theta));
        check(self.qmc_points > 0, "qmc_points must be positive".into());
        check(self.qmc_shifts > 0, "qmc_shifts must be positive".into());
        check((0.0..1.0).contains(&self.prune_below), format!("prune_below must lie in [0, 1), got {}", self.prune_below));
        check(self.trials > 0 || !self.simulate, "trials must be positive".into());
        check(self.threads != Some(0), "threads must be positive".into());
        check(!self.two_phase || self.nbar.is_some(), "two_phase requires nbar".into());
        check(!self.adaptive || self.nbar.is_some(), "adaptive requires nbar".into());
        check(!self.adaptive || !self.rates.is_empty(), "adaptive requires at least one rate".into());
        check(self.rates.iter().all(|&r| r >= 2), format!("rates must be at least 2, got {:?}", self.rates));
        check(!self.adaptive || self.gamma_max > 0, "gamma_max must be positive".into());
        check(self.horizon != Some(0), "horizon must be positive".into());
        check(!self.grid.as_ref().is_some_and(|g| g.is_empty() || g.contains(&0)), "grid counts must be positive".into());

        let spec = match &self.benchmark {
            BenchmarkSource::Named(name) => match Benchmark::from_name(name) {
                Some(b) => b.spec(if self.noise_scale > 0.0 { self.noise_scale } else { 1.0 }).map_err(|e| vec![e.to_string()]),
                None => {
                    let known: Vec<&str> = Benchmark::ALL.iter().map(|b| b.name()).collect();
                    Err(vec![format!("unknown benchmark '{name}' (built-in: {})", known.join(", "))])
                }
            },
            BenchmarkSource::Inline(inline) => inline.to_spec(),
        };
        let mut spec = match spec {
            Ok(s) => Some(s),
            Err(e) => {
                errors.extend(e);
                None
            }
        };

        let mut grid = Vec::new();
        let mut n = self.horizon.unwrap_or(0);
        if let Some(spec) = spec.as_mut() {
            let dim = spec.system.state_dim();
            grid = match self.grid.as_deref() {
                None => spec.grid.clone(),
                Some([g]) => vec![*g; dim],
                Some(g) => g.to_vec(),
            };
            if grid.len() != dim {
                errors.push(format!("grid must hold one count or {dim} counts, got {grid:?}"));
            } else if !grid.contains(&0) {
                let regions: usize = grid.iter().product();
                if let Some(&r) = self.sim_regions.iter().find(|&&r| r >= regions) {
                    errors.push(format!("sim_regions entry {r} exceeds the {regions} regions of the partition"));
                }
            }
            n = self.horizon.unwrap_or(spec.horizon);
            spec.horizon = n.max(1);
        }
        if let Some(nbar) = self.nbar {
            if nbar == 0 || (n > 0 && nbar > n) {
                errors.push(format!("nbar must satisfy 1 <= nbar <= N, got nbar = {nbar}, N = {n}"));
            }
        }
        let out_dir = match &self.out_dir {
            Some(d) if d.as_os_str().is_empty() => {
                errors.push("out_dir must not be empty".into());
                PathBuf::new()
            }
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("kalmdp-out")),
        };

        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        let spec = spec.expect("benchmark resolved when no errors were recorded");
        let horizon = HorizonSpec {
            n,
            nbar: self.nbar.unwrap_or(n),
            rates: if self.adaptive { self.rates.clone() } else { Vec::new() },
            gamma_max: self.gamma_max,
        };
        let build = BuildConfig {
            beta: self.beta,
            prob: ProbConfig {
                theta: self.theta,
                qmc_points: self.qmc_points,
                qmc_shifts: self.qmc_shifts,
                seed: sub_seed(self.seed, "qmc"),
                prune_below: self.prune_below,
            },
        };
        let mut config = self.clone();
        config.grid = Some(grid.clone());
        config.horizon = Some(n);
        config.out_dir = Some(out_dir.clone());
        Ok(Resolved { config, spec, grid, horizon, build, out_dir, sim_seed: sub_seed(self.seed, "simulation") })
    }
}
