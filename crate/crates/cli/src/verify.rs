//! Invariant suites run by `kalmdp verify` on the configured problem.

use std::time::Instant;

use clap::ValueEnum;
use kalmdp::abstraction::{covariance_pair, ABSORBING, CRITICAL, GOAL};
use kalmdp::geometry::{BackwardSet, ContainmentOracle};
use kalmdp::kalman::covariance_schedule;
use kalmdp::linalg::{is_psd, min_eigenvalue};
use kalmdp::model::rediscretize;
use kalmdp::{Imdp, Partition};
use serde::Serialize;

use crate::config::Resolved;
use crate::pipeline::{build, partition, solve};
use crate::CliError;

const PSD_TOL: f64 = 1e-9;
const SUM_TOL: f64 = 1e-6;

/// Deliberate corruption applied before the checks, to exercise them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Halve every bound of one transition row so its upper bounds sum below 1.
    TamperedRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

fn suite(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    SuiteResult { suite: name, passed, detail, seconds: t.elapsed().as_secs_f64() }
}

fn tamper(imdp: &Imdp) -> Result<Imdp, CliError> {
    let mut value = serde_json::to_value(imdp)?;
    let rows = value["rows"].as_array_mut().expect("serialized rows");
    let row = rows
        .iter_mut()
        .skip(1)
        .find(|r| r["entries"].as_array().is_some_and(|e| !e.is_empty()))
        .ok_or_else(|| CliError::Invariant(vec!["no row to tamper with".into()]))?;
    for entry in row["entries"].as_array_mut().expect("entries") {
        let p = &mut entry[1];
        let lo = p["lo"].as_f64().unwrap_or(0.0) * 0.5;
        p["lo"] = lo.into();
        p["hi"] = lo.into();
        p["nominal"] = lo.into();
    }
    Ok(serde_json::from_value(value)?)
}

fn kalman_suite(res: &Resolved) -> Result<String, String> {
    let sys = &res.spec.system;
    let steps = covariance_schedule(sys, res.spec.initial_belief.cov(), res.horizon.n).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for (k, s) in steps.iter().enumerate() {
        for (what, m) in [("predicted", &s.predicted_cov), ("posterior", &s.posterior_cov), ("mean dynamics", &s.mean_dyn_cov)] {
            let asym = (m - m.transpose()).amax();
            let e = min_eigenvalue(m);
            worst = worst.min(e);
            if asym > 1e-9 * m.amax().max(1.0) || e < -PSD_TOL * m.amax().max(1.0) {
                return Err(format!("step {k} {what} covariance: asymmetry {asym:.1e}, min eigenvalue {e:.1e}"));
            }
        }
    }
    let max_rate = res.horizon.rates.iter().copied().max().unwrap_or(2);
    let mut prev = sys.process_noise.cov().clone();
    for delta in 2..=max_rate {
        let lifted = rediscretize(sys, delta).map_err(|e| e.to_string())?;
        let cov = lifted.acc_noise().cov();
        if !is_psd(&(cov - &prev), PSD_TOL) {
            return Err(format!("accumulated noise of rate {delta} does not dominate rate {}", delta - 1));
        }
        prev = cov.clone();
    }
    Ok(format!("{} steps PSD (min eigenvalue {worst:.2e}), noise monotone up to rate {max_rate}", steps.len()))
}

fn pair_suite(res: &Resolved) -> Result<String, String> {
    let steps = covariance_schedule(&res.spec.system, res.spec.initial_belief.cov(), res.horizon.n).map_err(|e| e.to_string())?;
    let members: Vec<_> = steps[res.horizon.nbar.saturating_sub(1)..].iter().map(|s| s.mean_dyn_cov.clone()).collect();
    let pair = covariance_pair(&members).map_err(|e| e.to_string())?;
    for (i, m) in members.iter().enumerate() {
        let up = min_eigenvalue(&(&pair.upper - m));
        let lo = min_eigenvalue(&(m - &pair.lower));
        if up < -PSD_TOL || lo < -PSD_TOL {
            return Err(format!("member {i}: upper margin {up:.1e}, lower margin {lo:.1e}"));
        }
    }
    Ok(format!("pair encloses {} steady-phase mean covariances", members.len()))
}

fn oracle_suite(res: &Resolved, partition: &Partition) -> Result<String, String> {
    let sys = &res.spec.system;
    let oracle = ContainmentOracle::new(sys).map_err(|e| e.to_string())?;
    let regions = partition.regions();
    let stride = (regions.len() / 25).max(1);
    let mut checked = 0;
    let mut enabled = 0;
    for target in regions.iter().step_by(stride) {
        let set = BackwardSet::new(sys, &target.center).map_err(|e| e.to_string())?;
        for r in regions.iter().step_by(stride) {
            let fast = oracle.contains_region(&r.rect, &target.center);
            if fast != set.contains_region(&r.rect) {
                return Err(format!("oracle and vertex test disagree for region {} -> target {}", r.index, target.index));
            }
            checked += 1;
            enabled += fast as usize;
        }
    }
    Ok(format!("{checked} region/target pairs agree ({enabled} enabled)"))
}

fn row_suite(imdp: &Imdp) -> Result<String, String> {
    let mut worst = 0.0f64;
    for (i, row) in imdp.rows().iter().enumerate() {
        let lo: f64 = row.entries.iter().map(|e| e.1.lo).sum();
        let hi: f64 = row.entries.iter().map(|e| e.1.hi).sum();
        let nominal: f64 = row.entries.iter().map(|e| e.1.nominal).sum();
        if lo > 1.0 + SUM_TOL || hi < 1.0 - SUM_TOL {
            return Err(format!("row {i}: lower bounds sum to {lo}, upper bounds to {hi}"));
        }
        worst = worst.max((nominal - 1.0).abs());
        if (nominal - 1.0).abs() > SUM_TOL {
            return Err(format!("row {i}: nominal probabilities sum to {nominal}"));
        }
    }
    Ok(format!("{} rows feasible, nominal sums within {worst:.1e} of 1", imdp.rows().len()))
}

fn value_suite(imdp: &Imdp) -> Result<String, String> {
    let table = solve(imdp).map_err(|e| e.to_string())?;
    if !table.converged {
        return Err("value iteration did not converge".into());
    }
    if let Some((s, v)) = table.values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(format!("state {s} has value {v}"));
    }
    let v = &table.values;
    if v[GOAL] != 1.0 || v[CRITICAL] != 0.0 || v[ABSORBING] != 0.0 {
        return Err(format!("sink values goal {}, critical {}, absorbing {}", v[GOAL], v[CRITICAL], v[ABSORBING]));
    }
    let best = (0..imdp.regions()).filter_map(|r| imdp.initial_state(r).ok()).map(|s| v[s]).fold(0.0, f64::max);
    Ok(format!("values in [0, 1], best initial region {best:.4}"))
}

/// Runs every suite. Suites that need the abstraction fail together when
/// it cannot be built.
pub fn verify(res: &Resolved, fault: Option<Fault>) -> Result<Summary, CliError> {
    let partition = partition(res)?;
    let mut suites = vec![
        suite("config", || Ok("configuration valid".into())),
        suite("kalman-psd", || kalman_suite(res)),
        suite("covariance-pair", || pair_suite(res)),
        suite("containment-oracle", || oracle_suite(res, &partition)),
    ];
    let t = Instant::now();
    let built = build(res, &partition).and_then(|imdp| match fault {
        Some(Fault::TamperedRow) => tamper(&imdp),
        None => Ok(imdp),
    });
    let build_secs = t.elapsed().as_secs_f64();
    match built {
        Ok(imdp) => {
            suites.push(suite("abstraction-integrity", || {
                imdp.validate().map_err(|e| e.to_string())?;
                let r = imdp.report();
                Ok(format!("{} states, {} choices, {} transitions", r.states, r.choices, r.transitions))
            }));
            suites.last_mut().expect("just pushed").seconds += build_secs;
            suites.push(suite("probability-sums", || row_suite(&imdp)));
            suites.push(suite("value-bounds", || value_suite(&imdp)));
        }
        Err(e) => {
            for name in ["abstraction-integrity", "probability-sums", "value-bounds"] {
                suites.push(SuiteResult { suite: name, passed: false, detail: format!("abstraction unavailable: {e}"), seconds: 0.0 });
            }
        }
    }
    Ok(Summary { passed: suites.iter().all(|s| s.passed), suites })
}
