//! Interval MDP abstraction of the belief dynamics.
//!
//! States are partition regions replicated over time layers plus three
//! sinks (absorbing, goal, critical). Each layer has a [`Phase`]:
//! transient layers carry the exact per-step covariance, the steady layer
//! stands for every step from `nbar` on, and adaptive layers track the
//! covariance after a multi-step action until it re-enters the steady pair.

mod build;
mod covpair;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{ProbInterval, Successor};

pub use build::{build_adaptive, build_base, build_two_phase, BuildConfig, HorizonSpec};
pub use covpair::{covariance_pair, CovariancePair};

/// Index of the absorbing sink.
pub const ABSORBING: usize = 0;
/// Index of the goal sink.
pub const GOAL: usize = 1;
/// Index of the critical sink.
pub const CRITICAL: usize = 2;
const SINKS: usize = 3;

/// Time layer of a region state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Transient(usize),
    Steady,
    Adaptive { rate: usize, depth: usize },
}

impl Phase {
    /// Transient states know the exact step; the others stand for a range.
    pub fn is_timed(&self) -> bool {
        matches!(self, Phase::Transient(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateId {
    Absorbing,
    Goal,
    Critical,
    Region { region: usize, layer: usize },
}

/// Action steering the belief mean onto the center of `target` using
/// `rate` merged base steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId {
    pub target: usize,
    pub rate: usize,
}

/// Interval successor distribution, shared by every choice using it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Layer of `Successor::Region` entries. `None` only for rows without
    /// region successors.
    pub next_layer: Option<usize>,
    /// Base steps consumed.
    pub duration: usize,
    pub entries: Vec<(Successor, ProbInterval)>,
}

/// A state-action pair. `action` is `None` for the deadlock transition of
/// a state without enabled actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub action: Option<ActionId>,
    pub row: usize,
}

/// Diagnostics gathered while building.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    /// `epsilons[k]` is the augmentation radius for step `k` (entry 0 unused).
    pub epsilons: Vec<f64>,
    /// `(rate, deepest depth)` per adaptive rate that was built.
    pub adaptive_depths: Vec<(usize, usize)>,
    /// False when an adaptive chain was cut at `gamma_max` before its
    /// covariances re-entered the steady pair.
    pub correct: bool,
    pub warnings: Vec<String>,
}

/// Structure counts of a built abstraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub states: usize,
    pub choices: usize,
    pub transitions: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imdp {
    regions: usize,
    horizon: usize,
    layers: Vec<Phase>,
    rows: Vec<Row>,
    choices: Vec<Vec<Choice>>,
    targets: Vec<Vec<f64>>,
    pub info: BuildInfo,
}

impl Imdp {
    /// Assembles and validates an iMDP. `choices` is indexed by state and
    /// must be empty for the three sinks. `targets` holds the target point
    /// of each region (may be empty when no controller is derived).
    pub fn from_parts(
        regions: usize,
        horizon: usize,
        layers: Vec<Phase>,
        rows: Vec<Row>,
        choices: Vec<Vec<Choice>>,
        targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let imdp = Self { regions, horizon, layers, rows, choices, targets, info: BuildInfo { correct: true, ..Default::default() } };
        imdp.validate()?;
        Ok(imdp)
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    /// Number of base steps in the property horizon.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn layers(&self) -> &[Phase] {
        &self.layers
    }

    /// Number of leading transient layers.
    pub fn transient_layers(&self) -> usize {
        self.layers.iter().take_while(|p| p.is_timed()).count()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &Row {
        &self.rows[index]
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn num_states(&self) -> usize {
        SINKS + self.layers.len() * self.regions
    }

    pub fn choices(&self, state: usize) -> &[Choice] {
        &self.choices[state]
    }

    pub fn state_index(&self, id: StateId) -> Option<usize> {
        match id {
            StateId::Absorbing => Some(ABSORBING),
            StateId::Goal => Some(GOAL),
            StateId::Critical => Some(CRITICAL),
            StateId::Region { region, layer } => {
                (region < self.regions && layer < self.layers.len()).then(|| SINKS + layer * self.regions + region)
            }
        }
    }

    pub fn state_id(&self, index: usize) -> StateId {
        match index {
            ABSORBING => StateId::Absorbing,
            GOAL => StateId::Goal,
            CRITICAL => StateId::Critical,
            i => {
                let k = i - SINKS;
                StateId::Region { region: k % self.regions, layer: k / self.regions }
            }
        }
    }

    /// Phase of a region state; `None` for sinks.
    pub fn phase_of(&self, index: usize) -> Option<Phase> {
        match self.state_id(index) {
            StateId::Region { layer, .. } => Some(self.layers[layer]),
            _ => None,
        }
    }

    /// State index of a successor of `row`.
    pub fn successor_index(&self, row: &Row, succ: Successor) -> usize {
        match succ {
            Successor::Absorbing => ABSORBING,
            Successor::Goal => GOAL,
            Successor::Critical => CRITICAL,
            Successor::Region(j) => match row.next_layer {
                Some(l) => SINKS + l * self.regions + j,
                None => ABSORBING,
            },
        }
    }

    /// The step-0 state of `region`.
    pub fn initial_state(&self, region: usize) -> Result<usize> {
        if self.layers.is_empty() || region >= self.regions {
            return Err(Error::InvalidInput(format!("no initial state for region {region}")));
        }
        Ok(SINKS + region)
    }

    pub fn report(&self) -> StructuralReport {
        let choices = self.choices.iter().map(|c| c.len()).sum();
        let transitions = self.choices.iter().flatten().map(|c| self.rows[c.row].entries.len()).sum();
        StructuralReport { states: self.num_states(), choices, transitions, rows: self.rows.len() }
    }

    /// Checks structural invariants: feasible rows, sinks without choices,
    /// every region state with at least one choice, consistent layering.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Integrity(msg));
        if self.choices.len() != self.num_states() {
            return bad(format!("{} choice lists for {} states", self.choices.len(), self.num_states()));
        }
        let timed = self.transient_layers();
        for (l, p) in self.layers.iter().enumerate() {
            if let Phase::Transient(k) = *p {
                if k != l {
                    return bad(format!("layer {l} holds transient step {k}"));
                }
            }
        }
        if self.layers[timed..].iter().any(|p| p.is_timed()) {
            return bad("transient layers must come first".into());
        }
        if timed > self.horizon {
            return bad(format!("{timed} transient layers exceed horizon {}", self.horizon));
        }
        if !self.targets.is_empty() && self.targets.len() != self.regions {
            return bad("one target point per region required".into());
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.duration == 0 {
                return bad(format!("row {i} has zero duration"));
            }
            if let Some(l) = row.next_layer {
                if l >= self.layers.len() {
                    return bad(format!("row {i} points to missing layer {l}"));
                }
            }
            let (mut lo, mut hi) = (0.0, 0.0);
            for (w, (s, p)) in row.entries.iter().enumerate() {
                if !(0.0 <= p.lo && p.lo <= p.nominal && p.nominal <= p.hi && p.hi <= 1.0) {
                    return bad(format!("row {i} has malformed interval {p:?}"));
                }
                if w > 0 && row.entries[w - 1].0 >= *s {
                    return bad(format!("row {i} successors are not strictly sorted"));
                }
                if let Successor::Region(j) = s {
                    if *j >= self.regions || row.next_layer.is_none() {
                        return bad(format!("row {i} has region successor {j} without a valid layer"));
                    }
                }
                lo += p.lo;
                hi += p.hi;
            }
            if lo > 1.0 + 1e-9 || hi < 1.0 - 1e-9 {
                return bad(format!("row {i} admits no distribution (sum lo {lo}, sum hi {hi})"));
            }
        }
        for (s, list) in self.choices.iter().enumerate() {
            if s < SINKS {
                if !list.is_empty() {
                    return bad(format!("sink {s} has outgoing choices"));
                }
                continue;
            }
            if list.is_empty() {
                return bad(format!("state {s} has no choice"));
            }
            let phase = self.phase_of(s).expect("region state");
            for c in list {
                let Some(row) = self.rows.get(c.row) else {
                    return bad(format!("state {s} uses missing row {}", c.row));
                };
                if let Some(a) = c.action {
                    if a.target >= self.regions || a.rate == 0 {
                        return bad(format!("state {s} has invalid action {a:?}"));
                    }
                }
                if let Some(l) = row.next_layer {
                    match (phase, self.layers[l]) {
                        (Phase::Transient(k), Phase::Transient(j)) if j != k + row.duration => {
                            return bad(format!("state {s} jumps from step {k} to step {j}"));
                        }
                        (p, Phase::Transient(_)) if !p.is_timed() => {
                            return bad(format!("state {s} returns to a transient layer"));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}
