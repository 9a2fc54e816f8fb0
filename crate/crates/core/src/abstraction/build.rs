//! iMDP builders.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{covariance_pair, ActionId, BuildInfo, Choice, CovariancePair, Imdp, Phase, Row};
use crate::error::{dim_check, Error, Result};
use crate::geometry::{AugmentedRegions, ContainmentOracle, Partition};
use crate::kalman::{covariance_schedule, covariance_step, KalmanStep};
use crate::linalg::{min_eigenvalue, sup_norm_diff};
use crate::model::{rediscretize, BenchmarkSpec, LtiSystem};
use crate::probability::{
    error_bound, successor_masses, to_interval, BoxProbability, ProbConfig, ProbInterval, Successor, SuccessorGeometry,
};

/// Settings shared by all builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Per-step probability that the estimation error leaves its box.
    pub beta: f64,
    pub prob: ProbConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { beta: 0.01, prob: ProbConfig::default() }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        self.prob.validate()
    }
}

/// Horizon split and adaptive measurement rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub n: usize,
    /// First step handled by the steady layer.
    pub nbar: usize,
    #[serde(default)]
    pub rates: Vec<usize>,
    #[serde(default = "default_gamma_max")]
    pub gamma_max: usize,
}

fn default_gamma_max() -> usize {
    10
}

impl HorizonSpec {
    pub fn two_phase(n: usize, nbar: usize) -> Self {
        Self { n, nbar, rates: Vec::new(), gamma_max: default_gamma_max() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.nbar && self.nbar <= self.n) {
            return Err(Error::Config(format!("need 1 <= nbar <= N, got nbar = {}, N = {}", self.nbar, self.n)));
        }
        if let Some(r) = self.rates.iter().find(|&&r| r < 2) {
            return Err(Error::Config(format!("adaptive rates must be at least 2, got {r}")));
        }
        if !self.rates.is_empty() && self.gamma_max == 0 {
            return Err(Error::Config("gamma_max must be positive".into()));
        }
        Ok(())
    }
}

type Masses = Vec<(Successor, f64)>;
type Entries = Vec<(Successor, ProbInterval)>;

/// A covariance the next belief mean may have, with the matching
/// augmentation radius.
#[derive(Debug, Clone)]
struct Member {
    tilde: DMatrix<f64>,
    posterior: DMatrix<f64>,
    eps: f64,
}

const DEDUP_TOL: f64 = 1e-8;

fn dedup(members: Vec<Member>) -> Vec<Member> {
    let mut out: Vec<Member> = Vec::with_capacity(members.len());
    for m in members {
        let seen = out.iter().any(|o| {
            sup_norm_diff(&o.tilde, &m.tilde) < DEDUP_TOL
                && sup_norm_diff(&o.posterior, &m.posterior) < DEDUP_TOL
                && (o.eps - m.eps).abs() < DEDUP_TOL
        });
        if !seen {
            out.push(m);
        }
    }
    out
}

struct Context<'a> {
    spec: &'a BenchmarkSpec,
    partition: &'a Partition,
    cfg: &'a BuildConfig,
    n: usize,
    schedule: Vec<KalmanStep>,
    /// `epsilons[k]` belongs to the posterior covariance at step `k`.
    epsilons: Vec<f64>,
    targets: Vec<Vec<f64>>,
    enabled: Vec<Vec<usize>>,
    used: Vec<usize>,
    warnings: Vec<String>,
}

impl<'a> Context<'a> {
    fn new(spec: &'a BenchmarkSpec, partition: &'a Partition, cfg: &'a BuildConfig, n: usize) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        dim_check(partition.dim() == spec.system.state_dim(), || "partition and system dimensions differ".into())?;
        if n == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let schedule = covariance_schedule(&spec.system, spec.initial_belief.cov(), n)?;
        let mut posteriors = vec![spec.initial_belief.cov()];
        posteriors.extend(schedule.iter().map(|s| &s.posterior_cov));
        let epsilons = posteriors
            .par_iter()
            .map(|p| error_bound(p, cfg.beta, &cfg.prob))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<Vec<f64>> = partition.regions().iter().map(|r| r.center.clone()).collect();
        let oracle = ContainmentOracle::new(&spec.system)?;
        let enabled = enabled_actions(&oracle, partition, &targets);
        let used = used_targets(&enabled, targets.len());
        let mut warnings = Vec::new();
        if used.is_empty() && !targets.is_empty() {
            warnings.push("no action is enabled in any region; every state deadlocks".into());
        }
        Ok(Self { spec, partition, cfg, n, schedule, epsilons, targets, enabled, used, warnings })
    }

    /// Posterior covariance and radius at step `k`.
    fn posterior(&self, k: usize) -> &DMatrix<f64> {
        if k == 0 {
            self.spec.initial_belief.cov()
        } else {
            &self.schedule[k - 1].posterior_cov
        }
    }

    /// Mean-dynamics covariance of the transition into step `k >= 1`.
    fn member(&self, k: usize) -> Member {
        let s = &self.schedule[k - 1];
        Member { tilde: s.mean_dyn_cov.clone(), posterior: s.posterior_cov.clone(), eps: self.epsilons[k] }
    }

    fn masses(&mut self, cov: &DMatrix<f64>, eps: f64, used: &[usize]) -> Result<Vec<Masses>> {
        let eval = BoxProbability::new(cov, &self.cfg.prob)?;
        let aug = AugmentedRegions::new(&self.spec.goal_regions, &self.spec.critical_regions, eps);
        if aug.goal_vanished() {
            let msg = format!("goal set vanishes after augmentation by {eps:.6}");
            if !self.warnings.contains(&msg) {
                self.warnings.push(msg);
            }
        }
        let geom = SuccessorGeometry::new(self.partition, &aug);
        let prune = self.cfg.prob.prune_below;
        Ok(used.par_iter().map(|&l| successor_masses(&eval, &self.targets[l], &geom, prune)).collect())
    }

    /// Rows for one exactly known covariance.
    fn exact_rows(&mut self, m: &Member, used: &[usize], fold: bool) -> Result<Vec<Entries>> {
        let theta = self.cfg.prob.theta;
        let masses = self.masses(&m.tilde, m.eps, used)?;
        Ok(masses
            .into_iter()
            .map(|ms| {
                let ms = if fold { fold_regions(&ms) } else { ms };
                ms.iter().map(|&(s, p)| (s, to_interval(p, theta))).collect()
            })
            .collect())
    }

    /// Rows for a set of possible covariances: the per-successor envelope
    /// of every member and of the enclosing pair (evaluated with the
    /// largest radius). A singular lower bound is skipped: it collapses the
    /// mean onto a point and adds nothing the members do not already cover.
    /// Nominal values come from the last member.
    fn envelope_rows(&mut self, members: &[Member], used: &[usize]) -> Result<(Vec<Entries>, CovariancePair)> {
        let covs: Vec<DMatrix<f64>> = members.iter().map(|m| m.tilde.clone()).collect();
        let pair = covariance_pair(&covs)?;
        let eps_max = members.iter().map(|m| m.eps).fold(0.0, f64::max);
        let mut evals = Vec::with_capacity(members.len() + 2);
        for m in members {
            evals.push(self.masses(&m.tilde, m.eps, used)?);
        }
        let reference = evals.len() - 1;
        evals.push(self.masses(&pair.upper, eps_max, used)?);
        if min_eigenvalue(&pair.lower) > 1e-9 * pair.lower.amax() {
            evals.push(self.masses(&pair.lower, eps_max, used)?);
        }
        let theta = self.cfg.prob.theta;
        let rows = (0..used.len())
            .into_par_iter()
            .map(|pos| {
                let per: Vec<&Masses> = evals.iter().map(|e| &e[pos]).collect();
                envelope(&per, reference, theta)
            })
            .collect();
        Ok((rows, pair))
    }
}

fn enabled_actions(oracle: &ContainmentOracle<'_>, partition: &Partition, targets: &[Vec<f64>]) -> Vec<Vec<usize>> {
    partition
        .regions()
        .par_iter()
        .map(|r| (0..targets.len()).filter(|&l| oracle.contains_region(&r.rect, &targets[l])).collect())
        .collect()
}

fn used_targets(enabled: &[Vec<usize>], regions: usize) -> Vec<usize> {
    let mut flag = vec![false; regions];
    for &l in enabled.iter().flatten() {
        flag[l] = true;
    }
    (0..regions).filter(|&l| flag[l]).collect()
}

/// Moves region mass into the absorbing state (no layer follows).
fn fold_regions(masses: &Masses) -> Masses {
    let mut out: Masses = Vec::with_capacity(masses.len());
    let mut lost = 0.0;
    for &(s, p) in masses {
        match s {
            Successor::Region(_) | Successor::Absorbing => lost += p,
            _ => out.push((s, p)),
        }
    }
    if lost > 0.0 {
        out.push((Successor::Absorbing, lost));
    }
    out
}

/// `[min lo, max hi]` per successor over all evaluations; an evaluation
/// missing a successor contributes mass 0.
fn envelope(evals: &[&Masses], reference: usize, theta: f64) -> Entries {
    let mut succs: Vec<Successor> = evals.iter().flat_map(|e| e.iter().map(|&(s, _)| s)).collect();
    succs.sort_unstable();
    succs.dedup();
    let mass = |e: &Masses, s: Successor| e.binary_search_by(|(t, _)| t.cmp(&s)).map(|i| e[i].1).unwrap_or(0.0);
    succs
        .into_iter()
        .map(|s| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for e in evals {
                let iv = to_interval(mass(e, s), theta);
                lo = lo.min(iv.lo);
                hi = hi.max(iv.hi);
            }
            let nominal = mass(evals[reference], s);
            (s, ProbInterval { lo, hi, nominal: nominal.clamp(lo, hi) })
        })
        .collect()
}

fn deadlock_row() -> Row {
    Row { next_layer: None, duration: 1, entries: vec![(Successor::Absorbing, ProbInterval::exact(1.0))] }
}

/// Appends one row per used target and returns a region-indexed lookup.
fn push_rows(
    rows: &mut Vec<Row>,
    entries: Vec<Entries>,
    used: &[usize],
    regions: usize,
    next_layer: Option<usize>,
    duration: usize,
) -> Vec<usize> {
    let mut lookup = vec![usize::MAX; regions];
    for (&l, e) in used.iter().zip(entries) {
        let next_layer = if e.iter().any(|(s, _)| matches!(s, Successor::Region(_))) { next_layer } else { None };
        lookup[l] = rows.len();
        rows.push(Row { next_layer, duration, entries: e });
    }
    lookup
}

fn add_choices(out: &mut Vec<Choice>, enabled: &[usize], lookup: &[usize], rate: usize) {
    out.extend(enabled.iter().map(|&l| Choice { action: Some(ActionId { target: l, rate }), row: lookup[l] }));
}

fn finish_choices(mut list: Vec<Choice>) -> Vec<Choice> {
    if list.is_empty() {
        list.push(Choice { action: None, row: 0 });
    }
    list.sort_by_key(|c| c.action);
    list
}

fn assemble(ctx: Context<'_>, layers: Vec<Phase>, rows: Vec<Row>, choices: Vec<Vec<Choice>>, info: BuildInfo) -> Result<Imdp> {
    let mut imdp = Imdp::from_parts(ctx.targets.len(), ctx.n, layers, rows, choices, ctx.targets)?;
    imdp.info = info;
    Ok(imdp)
}

/// One transient layer per step `k in [0, N)`; the last layer sends all
/// region mass to the absorbing state.
pub fn build_base(spec: &BenchmarkSpec, partition: &Partition, cfg: &BuildConfig) -> Result<Imdp> {
    let n = spec.horizon;
    let mut ctx = Context::new(spec, partition, cfg, n)?;
    let regions = ctx.targets.len();
    let used = ctx.used.clone();
    let mut rows = vec![deadlock_row()];
    let mut lookups = Vec::with_capacity(n);
    for k in 0..n {
        let last = k + 1 == n;
        let entries = ctx.exact_rows(&ctx.member(k + 1), &used, last)?;
        let next = (!last).then_some(k + 1);
        lookups.push(push_rows(&mut rows, entries, &used, regions, next, 1));
    }
    let mut choices = vec![Vec::new(); 3];
    for lookup in &lookups {
        for i in 0..regions {
            let mut list = Vec::new();
            add_choices(&mut list, &ctx.enabled[i], lookup, 1);
            choices.push(finish_choices(list));
        }
    }
    let layers = (0..n).map(Phase::Transient).collect();
    let info = BuildInfo { epsilons: ctx.epsilons.clone(), adaptive_depths: vec![], correct: true, warnings: ctx.warnings.clone() };
    assemble(ctx, layers, rows, choices, info)
}

/// Transient layers for `k < nbar` followed by one steady layer whose rows
/// cover every step from `nbar` to `N`.
pub fn build_two_phase(spec: &BenchmarkSpec, partition: &Partition, horizon: &HorizonSpec, cfg: &BuildConfig) -> Result<Imdp> {
    build_layered(spec, partition, &HorizonSpec { rates: Vec::new(), ..horizon.clone() }, cfg)
}

/// Two-phase abstraction extended with multi-step actions that skip
/// measurements. Rates whose merged input matrix is rank deficient are
/// skipped with a warning; with no rates this equals [`build_two_phase`].
pub fn build_adaptive(spec: &BenchmarkSpec, partition: &Partition, horizon: &HorizonSpec, cfg: &BuildConfig) -> Result<Imdp> {
    build_layered(spec, partition, horizon, cfg)
}

struct AdaptiveBranch {
    rate: usize,
    enabled: Vec<Vec<usize>>,
    /// Rows from transient layer `k` and from the steady layer.
    transient: Vec<Vec<usize>>,
    steady: Vec<usize>,
    /// Rows from each adaptive depth.
    depths: Vec<Vec<usize>>,
    first_layer: usize,
}

fn build_layered(spec: &BenchmarkSpec, partition: &Partition, horizon: &HorizonSpec, cfg: &BuildConfig) -> Result<Imdp> {
    horizon.validate()?;
    let (n, nbar) = (horizon.n, horizon.nbar);
    let mut ctx = Context::new(spec, partition, cfg, n)?;
    let regions = ctx.targets.len();
    let used = ctx.used.clone();
    let mut rows = vec![deadlock_row()];
    let mut correct = true;

    let mut transient = Vec::with_capacity(nbar);
    for k in 0..nbar {
        let entries = ctx.exact_rows(&ctx.member(k + 1), &used, false)?;
        transient.push(push_rows(&mut rows, entries, &used, regions, Some(k + 1), 1));
    }
    let steady_members = dedup((nbar..=n).map(|k| ctx.member(k)).collect());
    let (entries, steady_pair) = ctx.envelope_rows(&steady_members, &used)?;
    let steady = push_rows(&mut rows, entries, &used, regions, Some(nbar), 1);

    let mut layers: Vec<Phase> = (0..nbar).map(Phase::Transient).collect();
    layers.push(Phase::Steady);
    let mut branches = Vec::new();
    let mut adaptive_depths = Vec::new();
    let mut rates = horizon.rates.clone();
    rates.sort_unstable();
    rates.dedup();
    for rate in rates {
        if rate > n {
            ctx.warnings.push(format!("adaptive rate {rate} exceeds the horizon; skipped"));
            continue;
        }
        let multi = rediscretize(&spec.system, rate)?;
        let sys: &LtiSystem = multi.lifted();
        let oracle = match ContainmentOracle::new(sys) {
            Ok(o) => o,
            Err(e) => {
                ctx.warnings.push(format!("adaptive rate {rate} skipped: {e}"));
                continue;
            }
        };
        let enabled = enabled_actions(&oracle, partition, &ctx.targets);
        let used_rate = used_targets(&enabled, regions);

        // Entry covariances after one rate-step from every possible step.
        let entry: Vec<Member> = (0..=n)
            .map(|k| {
                let s = covariance_step(sys, ctx.posterior(k))?;
                let eps = error_bound(&s.posterior_cov, cfg.beta, &cfg.prob)?;
                Ok(Member { tilde: s.mean_dyn_cov, posterior: s.posterior_cov, eps })
            })
            .collect::<Result<_>>()?;

        // Depth chain: propagate the covariance set with base steps until
        // every member lies inside the steady pair.
        let mut chain: Vec<Vec<Member>> = Vec::new();
        let mut current = dedup(entry.clone());
        loop {
            let next = dedup(
                current
                    .iter()
                    .map(|m| {
                        let s = covariance_step(&spec.system, &m.posterior)?;
                        let eps = error_bound(&s.posterior_cov, cfg.beta, &cfg.prob)?;
                        Ok(Member { tilde: s.mean_dyn_cov, posterior: s.posterior_cov, eps })
                    })
                    .collect::<Result<_>>()?,
            );
            let tol = 1e-9 * steady_pair.upper.amax().max(1.0);
            let inside = next.iter().all(|m| steady_pair.encloses(&m.tilde, tol));
            let depth = chain.len();
            chain.push(next.clone());
            if inside {
                break;
            }
            if depth + 1 >= horizon.gamma_max.max(1) {
                correct = false;
                ctx.warnings.push(format!(
                    "adaptive rate {rate}: covariances not inside the steady pair after {} steps; returned anyway",
                    depth + 1
                ));
                break;
            }
            current = next;
        }
        let first_layer = layers.len();
        layers.extend((0..chain.len()).map(|depth| Phase::Adaptive { rate, depth }));
        adaptive_depths.push((rate, chain.len() - 1));

        let mut t_rows = Vec::with_capacity(nbar);
        for k in 0..nbar {
            let entries = ctx.exact_rows(&entry[k], &used_rate, false)?;
            t_rows.push(push_rows(&mut rows, entries, &used_rate, regions, Some(first_layer), rate));
        }
        let (entries, _) = ctx.envelope_rows(&dedup(entry[nbar..].to_vec()), &used_rate)?;
        let s_rows = push_rows(&mut rows, entries, &used_rate, regions, Some(first_layer), rate);
        let mut d_rows = Vec::with_capacity(chain.len());
        for (depth, members) in chain.iter().enumerate() {
            let next = if depth + 1 < chain.len() { first_layer + depth + 1 } else { nbar };
            let (entries, _) = ctx.envelope_rows(members, &used)?;
            d_rows.push(push_rows(&mut rows, entries, &used, regions, Some(next), 1));
        }
        branches.push(AdaptiveBranch { rate, enabled, transient: t_rows, steady: s_rows, depths: d_rows, first_layer });
    }

    let mut choices = vec![Vec::new(); 3];
    for (l, phase) in layers.iter().enumerate() {
        for i in 0..regions {
            let mut list = Vec::new();
            match *phase {
                Phase::Transient(k) => {
                    add_choices(&mut list, &ctx.enabled[i], &transient[k], 1);
                    for b in &branches {
                        add_choices(&mut list, &b.enabled[i], &b.transient[k], b.rate);
                    }
                }
                Phase::Steady => {
                    add_choices(&mut list, &ctx.enabled[i], &steady, 1);
                    for b in &branches {
                        add_choices(&mut list, &b.enabled[i], &b.steady, b.rate);
                    }
                }
                Phase::Adaptive { rate, depth } => {
                    let b = branches.iter().find(|b| b.rate == rate).expect("branch for rate");
                    debug_assert_eq!(b.first_layer + depth, l);
                    add_choices(&mut list, &ctx.enabled[i], &b.depths[depth], 1);
                }
            }
            choices.push(finish_choices(list));
        }
    }
    let info = BuildInfo { epsilons: ctx.epsilons.clone(), adaptive_depths, correct, warnings: ctx.warnings.clone() };
    assemble(ctx, layers, rows, choices, info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hyperrect;
    use crate::model::{benchmarks, Gaussian};

    fn tiny_spec() -> BenchmarkSpec {
        let mut spec = benchmarks::double_integrator().unwrap();
        spec.horizon = 1;
        spec
    }

    #[test]
    fn single_region_horizon_one() {
        let spec = tiny_spec();
        let part = Partition::uniform(&spec.system.state_domain, &[1, 1]).unwrap();
        let m = build_base(&spec, &part, &BuildConfig::default()).unwrap();
        assert_eq!(m.num_states(), 4);
        assert!(m.choices(3).len() <= 1);
    }

    #[test]
    fn envelope_covers_members() {
        let a: Masses = vec![(Successor::Region(0), 0.5), (Successor::Goal, 0.5)];
        let b: Masses = vec![(Successor::Goal, 0.9), (Successor::Absorbing, 0.1)];
        let e = envelope(&[&a, &b], 1, 0.01);
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].0, Successor::Region(0));
        assert!(e[0].1.lo == 0.0 && (e[0].1.hi - 0.51).abs() < 1e-15 && e[0].1.nominal == 0.0);
        assert!((e[1].1.lo - 0.49).abs() < 1e-15 && (e[1].1.hi - 0.91).abs() < 1e-15);
    }

    #[test]
    fn fold_keeps_sinks() {
        let m: Masses = vec![(Successor::Region(3), 0.2), (Successor::Goal, 0.7), (Successor::Absorbing, 0.1)];
        let f = fold_regions(&m);
        assert_eq!(f.len(), 2);
        assert!((f[1].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn horizon_validation() {
        assert!(HorizonSpec::two_phase(16, 0).validate().is_err());
        assert!(HorizonSpec::two_phase(16, 17).validate().is_err());
        assert!(HorizonSpec { rates: vec![1], ..HorizonSpec::two_phase(16, 3) }.validate().is_err());
        assert!(HorizonSpec::two_phase(16, 16).validate().is_ok());
    }

    #[test]
    fn small_two_phase_and_adaptive() {
        let mut spec = benchmarks::double_integrator().unwrap();
        spec.horizon = 6;
        spec.initial_belief = Gaussian::zero_mean(crate::linalg::diag(&[2.0, 2.0])).unwrap();
        let part = Partition::uniform(&Hyperrect::new(vec![-21.0; 2], vec![21.0; 2]).unwrap(), &[7, 7]).unwrap();
        let cfg = BuildConfig::default();
        let h = HorizonSpec::two_phase(6, 2);
        let two = build_two_phase(&spec, &part, &h, &cfg).unwrap();
        assert_eq!(two.num_states(), 3 * 49 + 3);
        let same = build_adaptive(&spec, &part, &HorizonSpec { rates: vec![], ..h.clone() }, &cfg).unwrap();
        assert_eq!(same, two);
        let ad = build_adaptive(&spec, &part, &HorizonSpec { rates: vec![2], ..h }, &cfg).unwrap();
        assert!(ad.report().choices > two.report().choices);
        // Shared actions keep identical rows.
        for s in 3..two.num_states() {
            for c in two.choices(s).iter().filter(|c| c.action.is_some()) {
                let d = ad.choices(s).iter().find(|d| d.action == c.action).unwrap();
                assert_eq!(two.row(c.row).entries, ad.row(d.row).entries);
            }
        }
    }
}
