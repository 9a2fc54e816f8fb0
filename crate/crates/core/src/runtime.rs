//! Controller extraction and closed-loop Monte Carlo simulation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{ActionId, Imdp};
use crate::error::{Error, Result};
use crate::geometry::{Cell, Partition};
use crate::kalman;
use crate::linalg::pseudo_inverse;
use crate::lp::{self, Feasibility};
use crate::model::{rediscretize, BenchmarkSpec, LtiSystem};
use crate::probability::qmc::psd_cholesky;
use crate::solver::{best_choice, ValueTable};

const BOX_TOL: f64 = 1e-9;

/// Minimum-norm input `u` in the control box with `A mu + B u + mu_w = target`.
///
/// The least-norm solution `B+ r` is returned when it lies in the box.
/// Otherwise the remaining freedom `u = B+ r + N z` (columns of `N` span the
/// null space of `B`) is used to solve `min |z|^2` subject to the box by
/// Hildreth's dual coordinate ascent.
pub fn control_input(sys: &LtiSystem, mu: &[f64], target: &[f64]) -> Result<DVector<f64>> {
    let n = sys.state_dim();
    if mu.len() != n || target.len() != n {
        return Err(Error::Dimension("mean and target must match the state dimension".into()));
    }
    let r = DVector::from_column_slice(target) - &sys.a * DVector::from_column_slice(mu) - sys.process_noise.mean();
    let cb = &sys.control_box;
    let u0 = pseudo_inverse(&sys.b) * &r;
    let inside = |u: &DVector<f64>| cb.contains_with_tol(u.as_slice(), BOX_TOL);
    if inside(&u0) && (&sys.b * &u0 - &r).amax() <= 1e-8 * r.amax().max(1.0) {
        return Ok(clamp(u0, &cb.lo, &cb.hi));
    }
    if let Feasibility::Infeasible = lp::box_equality_feasible(&sys.b, &r, &cb.lo, &cb.hi) {
        return Err(Error::Controller(format!(
            "no admissible input steers {mu:?} to {target:?}; the action should not be enabled"
        )));
    }
    let null = null_space(&sys.b);
    if null.ncols() == 0 {
        return Err(Error::Controller("least-norm input leaves the box and B has no null space".into()));
    }
    let z = hildreth(&null, &u0, &cb.lo, &cb.hi);
    let u = &u0 + &null * z;
    if !inside(&u) {
        return Err(Error::Controller(format!("box-constrained input did not converge for target {target:?}")));
    }
    Ok(clamp(u, &cb.lo, &cb.hi))
}

fn clamp(mut u: DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    for i in 0..u.len() {
        u[i] = u[i].clamp(lo[i], hi[i]);
    }
    u
}

/// Orthonormal basis of `ker(B)` from the SVD.
fn null_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = b.ncols();
    let svd = b.transpose().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    // Complete the range of B^T to a basis of R^m and keep the complement.
    let mut basis: Vec<DVector<f64>> = (0..rank).map(|i| u.column(i).into_owned()).collect();
    let mut out = Vec::new();
    for e in 0..m {
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        for q in &basis {
            let d = q.dot(&v);
            v -= q * d;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            basis.push(v.clone());
            out.push(v);
        }
        if out.len() == m - rank {
            break;
        }
    }
    if out.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// `min |z|^2` subject to `lo <= u0 + N z <= hi`.
fn hildreth(null: &DMatrix<f64>, u0: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    let m = u0.len();
    let k = null.ncols();
    // Rows g_i z <= h_i: N z <= hi - u0 and -N z <= u0 - lo.
    let rows: Vec<(DVector<f64>, f64)> = (0..m)
        .flat_map(|i| {
            let g = null.row(i).transpose().into_owned();
            [(g.clone(), hi[i] - u0[i]), (-g, u0[i] - lo[i])]
        })
        .filter(|(g, _)| g.norm_squared() > 1e-14)
        .collect();
    let mut lambda = vec![0.0; rows.len()];
    let mut z = DVector::zeros(k);
    for _ in 0..20_000 {
        let mut change: f64 = 0.0;
        for (i, (g, h)) in rows.iter().enumerate() {
            let step = (g.dot(&z) - h) / g.norm_squared();
            let new = (lambda[i] + step).max(0.0);
            let delta = new - lambda[i];
            if delta != 0.0 {
                z -= g * delta;
                lambda[i] = new;
                change = change.max(delta.abs());
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    z
}

/// What the controller does at one decision instant.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Act { action: ActionId, input: DVector<f64>, next_layer: Option<usize> },
    /// No admissible action in the current abstract state.
    Deadlock,
    /// The belief mean left the partitioned domain.
    OutOfDomain,
}

/// Piecewise-affine feedback law from an abstract policy.
pub struct Controller<'a> {
    spec: &'a BenchmarkSpec,
    partition: &'a Partition,
    imdp: &'a Imdp,
    table: &'a ValueTable,
    systems: BTreeMap<usize, crate::model::MultirateSystem>,
}

impl<'a> Controller<'a> {
    pub fn new(spec: &'a BenchmarkSpec, partition: &'a Partition, imdp: &'a Imdp, table: &'a ValueTable) -> Result<Self> {
        if imdp.targets().len() != partition.len() {
            return Err(Error::InvalidInput("abstraction and partition differ in region count".into()));
        }
        let mut systems = BTreeMap::new();
        for s in 0..imdp.num_states() {
            for c in imdp.choices(s) {
                if let Some(a) = c.action {
                    if let std::collections::btree_map::Entry::Vacant(e) = systems.entry(a.rate) {
                        e.insert(rediscretize(&spec.system, a.rate)?);
                    }
                }
            }
        }
        Ok(Self { spec, partition, imdp, table, systems })
    }

    pub fn system(&self, rate: usize) -> Option<&crate::model::MultirateSystem> {
        self.systems.get(&rate)
    }

    /// Decision for belief mean `mu` in abstract layer `layer` with
    /// `remaining` base steps left.
    pub fn decide(&self, layer: usize, mu: &[f64], remaining: usize) -> Result<Decision> {
        let region = match self.partition.region_of(mu) {
            Cell::Region(i) => i,
            Cell::Absorbing => return Ok(Decision::OutOfDomain),
        };
        let state = self.imdp.state_index(crate::abstraction::StateId::Region { region, layer }).ok_or_else(|| {
            Error::InvalidInput(format!("no abstract state for region {region} in layer {layer}"))
        })?;
        let Some(ci) = best_choice(self.imdp, self.table, state, remaining)? else {
            return Ok(Decision::Deadlock);
        };
        let choice = self.imdp.choices(state)[ci];
        let Some(action) = choice.action else {
            return Ok(Decision::Deadlock);
        };
        let sys = self.systems[&action.rate].lifted();
        let input = control_input(sys, mu, &self.imdp.targets()[action.target])?;
        Ok(Decision::Act { action, input, next_layer: self.imdp.row(choice.row).next_layer })
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        self.spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub trials: usize,
    pub seed: u64,
    pub record_trajectories: bool,
    /// Replace every noise sample by its mean (and the initial state by the
    /// initial belief mean).
    pub noiseless: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { trials: 1000, seed: 0, record_trajectories: false, noiseless: false }
    }
}

/// One decision instant of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub trial: usize,
    pub step: usize,
    pub state: Vec<f64>,
    pub belief_mean: Vec<f64>,
    pub region: Option<usize>,
    pub action: Option<ActionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: usize,
    pub successes: usize,
    pub empirical_rate: f64,
    pub guaranteed_lower_bound: f64,
    /// `(1 - beta)^N`, the confidence attached to the lower bound.
    pub confidence: f64,
    pub trajectories: Option<Vec<TrajectoryPoint>>,
}

impl SimReport {
    /// Three-sigma binomial margin `3 sqrt(0.25 / trials)`.
    pub fn margin(&self) -> f64 {
        3.0 * (0.25 / self.trials as f64).sqrt()
    }

    pub fn consistent(&self) -> bool {
        self.empirical_rate >= self.guaranteed_lower_bound - self.margin()
    }
}

fn sample(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol: &DMatrix<f64>, noiseless: bool) -> DVector<f64> {
    if noiseless {
        return mean.clone();
    }
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol * z
}

/// Simulates the closed loop from the center of `initial_region`.
///
/// Success means the actual state lies in an original goal set at a
/// measurement instant within the horizon, before any visit to a critical
/// set. `beta` only feeds the reported confidence.
pub fn simulate(controller: &Controller<'_>, initial_region: usize, beta: f64, opts: &SimOptions) -> Result<SimReport> {
    if opts.trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let imdp = controller.imdp;
    let spec = controller.spec;
    let start = imdp.initial_state(initial_region)?;
    let mu0 = controller.partition.regions()[initial_region].center.clone();
    let horizon = imdp.horizon();
    let results: Vec<(bool, Vec<TrajectoryPoint>)> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| run_trial(controller, &mu0, trial, horizon, opts))
        .collect::<Result<_>>()?;
    let successes = results.iter().filter(|r| r.0).count();
    let trajectories = opts.record_trajectories.then(|| results.into_iter().flat_map(|r| r.1).collect());
    Ok(SimReport {
        trials: opts.trials,
        successes,
        empirical_rate: successes as f64 / opts.trials as f64,
        guaranteed_lower_bound: controller.table.values[start],
        confidence: (1.0 - beta).powi(spec.horizon as i32),
        trajectories,
    })
}

fn run_trial(
    ctl: &Controller<'_>,
    mu0: &[f64],
    trial: usize,
    horizon: usize,
    opts: &SimOptions,
) -> Result<(bool, Vec<TrajectoryPoint>)> {
    let spec = ctl.spec;
    let base = &spec.system;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial as u64);
    let w_chol = psd_cholesky(base.process_noise.cov());
    let v_chol = psd_cholesky(&base.meas_noise_cov);
    let v_mean = DVector::zeros(base.output_dim());

    let mut mu = DVector::from_column_slice(mu0);
    let mut cov = spec.initial_belief.cov().clone();
    let mut x = sample(&mut rng, &mu, &psd_cholesky(&cov), opts.noiseless);
    let mut layer = 0usize;
    let mut step = 0usize;
    let mut trace = Vec::new();
    let in_any = |sets: &[crate::geometry::Hyperrect], x: &DVector<f64>| sets.iter().any(|s| s.contains(x.as_slice()));

    let point = |step: usize, x: &DVector<f64>, mu: &DVector<f64>, action: Option<ActionId>| TrajectoryPoint {
        trial,
        step,
        state: x.as_slice().to_vec(),
        belief_mean: mu.as_slice().to_vec(),
        region: match ctl.partition.region_of(mu.as_slice()) {
            Cell::Region(i) => Some(i),
            Cell::Absorbing => None,
        },
        action,
    };

    while step < horizon {
        let decision = ctl.decide(layer, mu.as_slice(), horizon - step)?;
        if opts.record_trajectories {
            let action = if let Decision::Act { action, .. } = &decision { Some(*action) } else { None };
            trace.push(point(step, &x, &mu, action));
        }
        let Decision::Act { action, input, next_layer } = decision else {
            return Ok((false, trace));
        };
        let multi = ctl.systems.get(&action.rate).expect("system for every rate");
        for u in multi.split_input(&input) {
            let w = sample(&mut rng, base.process_noise.mean(), &w_chol, opts.noiseless);
            x = base.step(&x, &u, &w)?;
        }
        step += action.rate;
        let lifted = multi.lifted();
        let v = sample(&mut rng, &v_mean, &v_chol, opts.noiseless);
        let y = base.measure(&x, &v)?;
        let belief = crate::model::Gaussian::new(mu.clone(), cov.clone())?;
        let (pred_mean, pred_cov) = kalman::predict(lifted, &belief, &input)?;
        let gain = kalman::gain(lifted, &pred_cov)?;
        mu = kalman::correct_mean(&pred_mean, &gain, &lifted.c, &y);
        cov = kalman::correct_covariance(lifted, &pred_cov, &gain).0;

        let critical = in_any(&spec.critical_regions, &x);
        let goal = !critical && in_any(&spec.goal_regions, &x);
        if opts.record_trajectories && (critical || goal || next_layer.is_none() || step >= horizon) {
            // Final state of the trial, with no action attached.
            trace.push(point(step, &x, &mu, None));
        }
        if critical || goal {
            return Ok((goal, trace));
        }
        match next_layer {
            Some(l) => layer = l,
            None => return Ok((false, trace)),
        }
    }
    Ok((false, trace))
}

/// CSV with one row per step-0 region: index, center and lower bound.
pub fn write_heatmap(partition: &Partition, imdp: &Imdp, table: &ValueTable, mut out: impl Write) -> Result<()> {
    let header: Vec<String> = (0..partition.dim()).map(|a| format!("x{a}")).collect();
    writeln!(out, "region,{},value", header.join(","))?;
    for r in partition.regions() {
        let v = table.values[imdp.initial_state(r.index)?];
        let c: Vec<String> = r.center.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{},{},{v:.9}", r.index, c.join(","))?;
    }
    Ok(())
}

pub fn emit_heatmap(partition: &Partition, imdp: &Imdp, table: &ValueTable, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_heatmap(partition, imdp, table, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// CSV of recorded trajectory points.
pub fn write_trajectories(points: &[TrajectoryPoint], mut out: impl Write) -> Result<()> {
    let n = points.first().map_or(0, |p| p.state.len());
    let xs: Vec<String> = (0..n).map(|a| format!("x{a}")).collect();
    let ms: Vec<String> = (0..n).map(|a| format!("mu{a}")).collect();
    writeln!(out, "trial,step,{},{},region,action_target,action_rate", xs.join(","), ms.join(","))?;
    for p in points {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",");
        let region = p.region.map_or(String::new(), |r| r.to_string());
        let (t, r) = p.action.map_or((String::new(), String::new()), |a| (a.target.to_string(), a.rate.to_string()));
        writeln!(out, "{},{},{},{},{region},{t},{r}", p.trial, p.step, join(&p.state), join(&p.belief_mean))?;
    }
    Ok(())
}
