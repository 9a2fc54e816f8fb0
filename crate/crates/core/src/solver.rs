//! Robust value iteration: the largest lower bound on the reach-avoid
//! probability that a policy can guarantee against every distribution
//! admitted by the intervals.
//!
//! Transient states are timed (layer `k` has `N - k` steps left) and are
//! solved by one backward pass. Steady and adaptive states stand for a
//! range of steps, so their values are tabulated per number of remaining
//! steps `r` and looked up by the timed layers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{Imdp, Phase, StateId, ABSORBING, CRITICAL, GOAL};
use crate::error::{Error, Result};
use crate::probability::ProbInterval;

/// Slack on interval sums before a row is reported as infeasible.
const SUM_TOL: f64 = 1e-9;

/// `min_P sum P(s) v(s)` over distributions with `lo <= P <= hi`.
///
/// Every successor first gets its lower bound; the remaining mass goes to
/// the lowest-valued successors up to their upper bounds.
pub fn worst_case_expectation(intervals: &[ProbInterval], values: &[f64]) -> Result<f64> {
    if intervals.len() != values.len() {
        return Err(Error::Dimension(format!("{} intervals for {} values", intervals.len(), values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    fill_lowest(intervals.iter().copied().zip(values.iter().copied()), &order)
}

fn fill_lowest(items: impl Iterator<Item = (ProbInterval, f64)> + Clone, order: &[usize]) -> Result<f64> {
    let (mut lo_sum, mut hi_sum, mut acc) = (0.0, 0.0, 0.0);
    for (p, v) in items.clone() {
        lo_sum += p.lo;
        hi_sum += p.hi;
        acc += p.lo * v;
    }
    if lo_sum > 1.0 + SUM_TOL || hi_sum < 1.0 - SUM_TOL {
        return Err(Error::Integrity(format!("interval row admits no distribution (sum lo {lo_sum}, sum hi {hi_sum})")));
    }
    let items: Vec<(ProbInterval, f64)> = items.collect();
    let mut budget = 1.0 - lo_sum;
    for &i in order {
        if budget <= 0.0 {
            break;
        }
        let (p, v) = items[i];
        let add = (p.hi - p.lo).min(budget);
        acc += add * v;
        budget -= add;
    }
    Ok(acc.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Cap on the number of remaining-step tables for untimed layers.
    pub max_sweeps: usize,
    /// Untimed tables stop growing once consecutive tables differ by less
    /// than this in sup-norm.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_sweeps: 100_000, tol: 1e-6 }
    }
}

/// Solution of [`robust_value_iteration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    /// Value of each state: timed states at their own step, untimed states
    /// with `N - nbar` steps left.
    pub values: Vec<f64>,
    /// Maximizing choice index of each state (same time convention).
    pub policy: Vec<Option<usize>>,
    /// False when `max_sweeps` cut the untimed tables short.
    pub converged: bool,
    timed: Vec<f64>,
    /// `untimed[r][s]` for `r = 0..untimed.len()`; larger `r` clamps.
    untimed: Vec<Vec<f64>>,
}

fn sink_value(state: usize) -> Option<f64> {
    match state {
        GOAL => Some(1.0),
        ABSORBING | CRITICAL => Some(0.0),
        _ => None,
    }
}

impl ValueTable {
    /// Value of `state` with `remaining` steps left. Timed states ignore
    /// `remaining`.
    pub fn value_at(&self, imdp: &Imdp, state: usize, remaining: usize) -> f64 {
        if let Some(v) = sink_value(state) {
            return v;
        }
        if imdp.phase_of(state).is_some_and(|p| p.is_timed()) {
            self.timed[state]
        } else {
            let r = remaining.min(self.untimed.len() - 1);
            self.untimed[r][state]
        }
    }
}

/// Best choice and its value at `state` with `remaining` steps left, given
/// a lookup for successor values. Ties go to the lowest choice index,
/// which carries the lowest action id.
fn backup(imdp: &Imdp, state: usize, remaining: usize, lookup: impl Fn(usize, usize) -> f64) -> Result<(f64, Option<usize>)> {
    let mut best = (0.0, None);
    for (ci, c) in imdp.choices(state).iter().enumerate() {
        let row = imdp.row(c.row);
        if row.duration > remaining {
            continue;
        }
        let left = remaining - row.duration;
        let mut vals: Vec<f64> = Vec::with_capacity(row.entries.len());
        for &(s, _) in &row.entries {
            vals.push(lookup(imdp.successor_index(row, s), left));
        }
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let v = fill_lowest(row.entries.iter().map(|e| e.1).zip(vals.iter().copied()), &order)?;
        if best.1.is_none() || v > best.0 {
            best = (v, Some(ci));
        }
    }
    Ok(best)
}

/// Maximizing choice at `state` with `remaining` steps left, as used by the
/// controller. `None` for sinks and when no choice fits in `remaining`.
pub fn best_choice(imdp: &Imdp, table: &ValueTable, state: usize, remaining: usize) -> Result<Option<usize>> {
    if sink_value(state).is_some() {
        return Ok(None);
    }
    let (_, c) = backup(imdp, state, remaining, |s, r| table.value_at(imdp, s, r))?;
    Ok(c)
}

/// Finite-horizon robust value iteration.
pub fn robust_value_iteration(imdp: &Imdp, opts: &SolveOptions) -> Result<ValueTable> {
    let n_states = imdp.num_states();
    let horizon = imdp.horizon();
    let timed_layers = imdp.transient_layers();
    let regions = imdp.regions();
    let mut base = vec![0.0; n_states];
    base[GOAL] = 1.0;

    let untimed_states: Vec<usize> = (3 + timed_layers * regions..n_states).collect();
    let max_duration = imdp.rows().iter().map(|r| r.duration).max().unwrap_or(1);

    // Untimed tables for r = 0, 1, ... with early stop once the last
    // `max_duration` increments are all below tol.
    let mut untimed = vec![base.clone()];
    let mut converged = true;
    if !untimed_states.is_empty() {
        let mut quiet = 0usize;
        for r in 1..=horizon {
            if r > opts.max_sweeps {
                converged = false;
                break;
            }
            let prev_tables = &untimed;
            let lookup = |s: usize, left: usize| prev_tables[left.min(prev_tables.len() - 1)][s];
            let new_vals: Vec<f64> = untimed_states
                .par_iter()
                .map(|&s| backup(imdp, s, r, lookup).map(|b| b.0))
                .collect::<Result<_>>()?;
            let mut next = base.clone();
            let mut diff: f64 = 0.0;
            let last = &untimed[r - 1];
            for (&s, v) in untimed_states.iter().zip(new_vals) {
                diff = diff.max((v - last[s]).abs());
                next[s] = v;
            }
            untimed.push(next);
            quiet = if diff < opts.tol { quiet + 1 } else { 0 };
            if quiet >= max_duration {
                break;
            }
        }
    }

    let mut timed = base.clone();
    let mut policy = vec![None; n_states];
    for k in (0..timed_layers).rev() {
        let remaining = horizon - k;
        let states: Vec<usize> = (3 + k * regions..3 + (k + 1) * regions).collect();
        let done = &timed;
        let tables = &untimed;
        let lookup = |s: usize, left: usize| {
            if let Some(v) = sink_value(s) {
                v
            } else if matches!(imdp.phase_of(s), Some(Phase::Transient(_))) {
                done[s]
            } else {
                tables[left.min(tables.len() - 1)][s]
            }
        };
        let res: Vec<(f64, Option<usize>)> = states.par_iter().map(|&s| backup(imdp, s, remaining, lookup)).collect::<Result<_>>()?;
        for (&s, (v, c)) in states.iter().zip(res) {
            timed[s] = v;
            policy[s] = c;
        }
    }

    let mut table = ValueTable { values: Vec::new(), policy: Vec::new(), converged, timed, untimed };
    let steady_remaining = horizon - timed_layers;
    let mut values = vec![0.0; n_states];
    for (s, v) in values.iter_mut().enumerate() {
        *v = table.value_at(imdp, s, steady_remaining);
    }
    let untimed_policy: Vec<Option<usize>> = untimed_states
        .par_iter()
        .map(|&s| best_choice(imdp, &table, s, steady_remaining))
        .collect::<Result<_>>()?;
    for (&s, c) in untimed_states.iter().zip(untimed_policy) {
        policy[s] = c;
    }
    table.values = values;
    table.policy = policy;
    Ok(table)
}

/// Value of the step-0 state of `region`.
pub fn reachability_from(imdp: &Imdp, table: &ValueTable, region: usize) -> Result<f64> {
    Ok(table.values[imdp.initial_state(region)?])
}

/// Writes one CSV line per state: index, kind, region, phase, value and
/// chosen action.
pub fn write_values_csv(imdp: &Imdp, table: &ValueTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "state,kind,region,phase,value,action_target,action_rate")?;
    for s in 0..imdp.num_states() {
        let (kind, region, phase) = match imdp.state_id(s) {
            StateId::Absorbing => ("absorbing", String::new(), String::new()),
            StateId::Goal => ("goal", String::new(), String::new()),
            StateId::Critical => ("critical", String::new(), String::new()),
            StateId::Region { region, layer } => {
                let phase = match imdp.layers()[layer] {
                    Phase::Transient(k) => format!("t{k}"),
                    Phase::Steady => "steady".to_string(),
                    Phase::Adaptive { rate, depth } => format!("a{rate}.{depth}"),
                };
                ("region", region.to_string(), phase)
            }
        };
        let action = table.policy[s].and_then(|c| imdp.choices(s)[c].action);
        let (t, r) = action.map_or((String::new(), String::new()), |a| (a.target.to_string(), a.rate.to_string()));
        writeln!(out, "{s},{kind},{region},{phase},{:.9},{t},{r}", table.values[s])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{ActionId, Choice, Row};
    use crate::probability::Successor;

    fn iv(lo: f64, hi: f64) -> ProbInterval {
        ProbInterval { lo, hi, nominal: lo }
    }

    #[test]
    fn inner_minimization() {
        assert!((worst_case_expectation(&[iv(1.0, 1.0)], &[0.7]).unwrap() - 0.7).abs() < 1e-15);
        let two = worst_case_expectation(&[iv(0.2, 0.6), iv(0.2, 0.6)], &[0.0, 1.0]).unwrap();
        assert!((two - 0.4).abs() < 1e-15);
        let three = worst_case_expectation(&[iv(0.1, 0.5), iv(0.2, 0.4), iv(0.3, 0.6)], &[0.0, 0.5, 1.0]).unwrap();
        assert!((three - 0.4).abs() < 1e-15);
        let err = worst_case_expectation(&[iv(0.6, 0.7), iv(0.6, 0.7)], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    fn one_region(entries: Vec<(Successor, ProbInterval)>) -> Imdp {
        let row = Row { next_layer: None, duration: 1, entries };
        let c = Choice { action: Some(ActionId { target: 0, rate: 1 }), row: 0 };
        Imdp::from_parts(1, 1, vec![Phase::Transient(0)], vec![row], vec![vec![], vec![], vec![], vec![c]], vec![]).unwrap()
    }

    #[test]
    fn sure_goal() {
        let m = one_region(vec![(Successor::Goal, ProbInterval::exact(1.0))]);
        let t = robust_value_iteration(&m, &SolveOptions::default()).unwrap();
        assert_eq!(t.values[3], 1.0);
        assert_eq!(reachability_from(&m, &t, 0).unwrap(), 1.0);
        assert_eq!(t.values[GOAL], 1.0);
        assert_eq!(t.values[CRITICAL], 0.0);
    }

    #[test]
    fn adversary_prefers_critical() {
        let m = one_region(vec![(Successor::Goal, iv(0.3, 0.5)), (Successor::Critical, iv(0.5, 0.7))]);
        let t = robust_value_iteration(&m, &SolveOptions::default()).unwrap();
        assert!((t.values[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn steady_self_loop_counts_remaining_steps() {
        // One transient layer then a steady layer that reaches the goal with
        // probability 1/2 per step and otherwise stays.
        let rows = vec![
            Row { next_layer: Some(1), duration: 1, entries: vec![(Successor::Region(0), ProbInterval::exact(1.0))] },
            Row {
                next_layer: Some(1),
                duration: 1,
                entries: vec![(Successor::Region(0), ProbInterval::exact(0.5)), (Successor::Goal, ProbInterval::exact(0.5))],
            },
        ];
        let a = Some(ActionId { target: 0, rate: 1 });
        let choices = vec![vec![], vec![], vec![], vec![Choice { action: a, row: 0 }], vec![Choice { action: a, row: 1 }]];
        let m = Imdp::from_parts(1, 4, vec![Phase::Transient(0), Phase::Steady], rows, choices, vec![]).unwrap();
        let t = robust_value_iteration(&m, &SolveOptions::default()).unwrap();
        // Three steady steps remain after step 0.
        assert!((t.values[3] - 0.875).abs() < 1e-15);
        assert!((t.value_at(&m, 4, 1) - 0.5).abs() < 1e-15);
    }
}
