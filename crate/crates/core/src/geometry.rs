//! Boxes, the grid partition of the state domain, backward reachable sets of
//! target means, and expansion/contraction of goal and critical sets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg;
use crate::lp::{self, Feasibility};
use crate::model::LtiSystem;

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`. Bounds may be
/// infinite (used for goal and critical sets that ignore some axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperrect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Hyperrect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        dim_check(lo.len() == hi.len(), || "box bound lengths differ".into())?;
        if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::InvalidInput(format!("invalid box bounds {lo:?} / {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: &[f64]) -> Self {
        Self { lo: x.to_vec(), hi: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l < h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_tol(x, 0.0)
    }

    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn contains_rect(&self, other: &Hyperrect) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b) && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    /// Closed intersection, `None` when empty.
    pub fn intersect(&self, other: &Hyperrect) -> Option<Hyperrect> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(l, h)| l <= h) {
            Some(Hyperrect { lo, hi })
        } else {
            None
        }
    }

    /// True when the intersection has positive volume.
    pub fn overlaps_interior(&self, other: &Hyperrect) -> bool {
        self.lo.iter().zip(&self.hi).zip(other.lo.iter().zip(&other.hi)).all(|((l1, h1), (l2, h2))| l1.max(*l2) < h1.min(*h2))
    }

    /// Grows every axis by `eps` in both directions.
    pub fn expand(&self, eps: f64) -> Hyperrect {
        Hyperrect {
            lo: self.lo.iter().map(|l| l - eps).collect(),
            hi: self.hi.iter().map(|h| h + eps).collect(),
        }
    }

    /// Shrinks every axis by `eps`; `None` when some axis width drops to zero or below.
    pub fn contract(&self, eps: f64) -> Option<Hyperrect> {
        let lo: Vec<f64> = self.lo.iter().map(|l| l + eps).collect();
        let hi: Vec<f64> = self.hi.iter().map(|h| h - eps).collect();
        if lo.iter().zip(&hi).all(|(l, h)| l < h) {
            Some(Hyperrect { lo, hi })
        } else {
            None
        }
    }

    /// All `2^n` corners. Only meaningful for finite boxes.
    pub fn vertices(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = self.dim();
        (0..1usize << n).map(move |mask| {
            (0..n).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect()
        })
    }

    /// Halfspace form `M x <= b` with `2n` rows (`x_i <= hi_i`, `-x_i <= -lo_i`).
    pub fn halfspaces(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut m = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            m[(2 * i, i)] = 1.0;
            b[2 * i] = self.hi[i];
            m[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -self.lo[i];
        }
        (m, b)
    }

    /// `self` minus the union of `holes`, as boxes with pairwise disjoint
    /// interiors. Pieces of zero volume are dropped.
    pub fn subtract(&self, holes: &[Hyperrect]) -> Vec<Hyperrect> {
        let mut pieces = vec![self.clone()];
        for hole in holes {
            let mut next = Vec::with_capacity(pieces.len() + 2 * self.dim());
            for piece in pieces {
                if !piece.overlaps_interior(hole) {
                    next.push(piece);
                    continue;
                }
                // Axis sweep: peel off the slabs below and above the hole on each axis.
                let mut rest = piece;
                for axis in 0..rest.dim() {
                    if rest.lo[axis] < hole.lo[axis] {
                        let mut below = rest.clone();
                        below.hi[axis] = hole.lo[axis];
                        next.push(below);
                        rest.lo[axis] = hole.lo[axis];
                    }
                    if rest.hi[axis] > hole.hi[axis] {
                        let mut above = rest.clone();
                        above.lo[axis] = hole.hi[axis];
                        next.push(above);
                        rest.hi[axis] = hole.hi[axis];
                    }
                }
            }
            pieces = next;
        }
        pieces.retain(|p| p.is_nondegenerate());
        pieces
    }
}

/// Union of boxes as boxes with pairwise disjoint interiors.
pub fn disjoint_union(boxes: &[Hyperrect]) -> Vec<Hyperrect> {
    let mut out: Vec<Hyperrect> = Vec::new();
    for b in boxes {
        let fresh = b.subtract(&out);
        out.extend(fresh);
    }
    out
}

/// One cell of the partition.
#[derive(Debug, Clone)]
pub struct Region {
    pub index: usize,
    pub rect: Hyperrect,
    pub halfspace_m: DMatrix<f64>,
    pub halfspace_b: DVector<f64>,
    /// Target point of actions steering into this region.
    pub center: Vec<f64>,
}

/// Result of mapping a point onto the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Region(usize),
    Absorbing,
}

/// Uniform grid over the state domain. Regions are ordered row-major with
/// the first axis most significant.
#[derive(Debug, Clone)]
pub struct Partition {
    domain: Hyperrect,
    counts: Vec<usize>,
    widths: Vec<f64>,
    regions: Vec<Region>,
}

impl Partition {
    pub fn uniform(domain: &Hyperrect, counts: &[usize]) -> Result<Self> {
        dim_check(counts.len() == domain.dim(), || {
            format!("{} axis counts for a {}-dimensional domain", counts.len(), domain.dim())
        })?;
        if counts.contains(&0) {
            return Err(Error::InvalidInput("partition counts must be at least 1".into()));
        }
        if !domain.is_nondegenerate() || domain.lo.iter().chain(&domain.hi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("partition domain must be finite and non-degenerate".into()));
        }
        let widths: Vec<f64> = domain.widths().iter().zip(counts).map(|(w, c)| w / *c as f64).collect();
        let total: usize = counts.iter().product();
        let mut part = Self { domain: domain.clone(), counts: counts.to_vec(), widths, regions: Vec::with_capacity(total) };
        for index in 0..total {
            let idx = part.multi_index(index);
            let lo: Vec<f64> = (0..idx.len()).map(|a| part.edge(a, idx[a])).collect();
            let hi: Vec<f64> = (0..idx.len()).map(|a| part.edge(a, idx[a] + 1)).collect();
            let rect = Hyperrect { lo, hi };
            let (halfspace_m, halfspace_b) = rect.halfspaces();
            let center = rect.center();
            part.regions.push(Region { index, rect, halfspace_m, halfspace_b, center });
        }
        Ok(part)
    }

    fn edge(&self, axis: usize, k: usize) -> f64 {
        if k == self.counts[axis] {
            self.domain.hi[axis]
        } else {
            self.domain.lo[axis] + k as f64 * self.widths[axis]
        }
    }

    pub fn domain(&self) -> &Hyperrect {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.counts.len()];
        for axis in (0..self.counts.len()).rev() {
            out[axis] = index % self.counts[axis];
            index /= self.counts[axis];
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    /// Cell index along one axis, or `None` outside the domain. Cells are
    /// half-open `[lo, hi)` except the last one which also holds the upper edge.
    pub fn axis_cell(&self, axis: usize, x: f64) -> Option<usize> {
        let (lo, hi) = (self.domain.lo[axis], self.domain.hi[axis]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let k = ((x - lo) / self.widths[axis]).floor() as usize;
        let mut k = k.min(self.counts[axis] - 1);
        // Guard against rounding putting x just below the computed edge.
        if k > 0 && x < self.edge(axis, k) {
            k -= 1;
        }
        Some(k)
    }

    pub fn region_of(&self, x: &[f64]) -> Cell {
        if x.len() != self.dim() {
            return Cell::Absorbing;
        }
        let mut idx = Vec::with_capacity(x.len());
        for (axis, v) in x.iter().enumerate() {
            match self.axis_cell(axis, *v) {
                Some(k) => idx.push(k),
                None => return Cell::Absorbing,
            }
        }
        Cell::Region(self.flat_index(&idx))
    }
}

/// Belief means from which some admissible (possibly stacked) input drives
/// the predicted mean exactly onto `target`.
///
/// Never materialized; only membership and containment are exposed.
#[derive(Debug, Clone)]
pub struct BackwardSet<'a> {
    target: Vec<f64>,
    system: &'a LtiSystem,
}

impl<'a> BackwardSet<'a> {
    pub fn new(system: &'a LtiSystem, target: &[f64]) -> Result<Self> {
        dim_check(target.len() == system.state_dim(), || "target dimension".into())?;
        require_full_row_rank(system)?;
        Ok(Self { target: target.to_vec(), system })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Input offset that must be produced by `B u` to land on the target from `mu`.
    fn required(&self, mu: &[f64]) -> DVector<f64> {
        let d = DVector::from_column_slice(&self.target);
        let mu = DVector::from_column_slice(mu);
        d - &self.system.a * mu - self.system.process_noise.mean()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        let rhs = self.required(mu);
        let cb = &self.system.control_box;
        lp::box_equality_feasible(&self.system.b, &rhs, &cb.lo, &cb.hi).is_feasible()
    }

    pub fn witness(&self, mu: &[f64]) -> Feasibility {
        let rhs = self.required(mu);
        let cb = &self.system.control_box;
        lp::box_equality_feasible(&self.system.b, &rhs, &cb.lo, &cb.hi)
    }

    /// Vertex test: the feasible-mean set is convex, so a box lies inside it
    /// iff all of its corners do.
    pub fn contains_region(&self, rect: &Hyperrect) -> bool {
        rect.vertices().all(|v| self.contains(&v))
    }
}

pub(crate) fn require_full_row_rank(system: &LtiSystem) -> Result<()> {
    let n = system.state_dim();
    if linalg::rank(&system.b, 1e-10) < n {
        return Err(Error::Config(format!(
            "input matrix has rank {} < state dimension {n}; merge more time steps (larger rate) so every direction is reachable",
            linalg::rank(&system.b, 1e-10)
        )));
    }
    Ok(())
}

/// Batched containment queries for one system, used when enabling actions
/// for every (region, target) pair.
///
/// With a square invertible input matrix the required input is affine in
/// the mean, so its range over a box is evaluated exactly by interval
/// arithmetic; otherwise it falls back to the vertex LPs.
#[derive(Debug, Clone)]
pub struct ContainmentOracle<'a> {
    system: &'a LtiSystem,
    /// `B^-1` and `B^-1 A` when `B` is square and invertible.
    inverse: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

const CONTAIN_TOL: f64 = 1e-9;

impl<'a> ContainmentOracle<'a> {
    pub fn new(system: &'a LtiSystem) -> Result<Self> {
        require_full_row_rank(system)?;
        let inverse = if system.b.is_square() {
            system.b.clone().try_inverse().map(|inv| {
                let ia = &inv * &system.a;
                (inv, ia)
            })
        } else {
            None
        };
        Ok(Self { system, inverse })
    }

    pub fn contains_region(&self, rect: &Hyperrect, target: &[f64]) -> bool {
        match &self.inverse {
            Some((inv, inv_a)) => {
                let d = DVector::from_column_slice(target) - self.system.process_noise.mean();
                let c = DVector::from_column_slice(&rect.center());
                let half: Vec<f64> = rect.widths().iter().map(|w| 0.5 * w).collect();
                let mid = inv * d - inv_a * c;
                let cb = &self.system.control_box;
                (0..mid.len()).all(|i| {
                    let spread: f64 = (0..half.len()).map(|j| inv_a[(i, j)].abs() * half[j]).sum();
                    mid[i] - spread >= cb.lo[i] - CONTAIN_TOL && mid[i] + spread <= cb.hi[i] + CONTAIN_TOL
                })
            }
            None => {
                let set = BackwardSet { target: target.to_vec(), system: self.system };
                set.contains_region(rect)
            }
        }
    }
}

/// Contracts goal boxes and expands critical boxes by `eps` on every axis.
/// Goal boxes that vanish are dropped.
pub fn augment_regions(goal: &[Hyperrect], critical: &[Hyperrect], eps: f64) -> (Vec<Hyperrect>, Vec<Hyperrect>) {
    let eps = eps.max(0.0);
    let goal = goal.iter().filter_map(|g| g.contract(eps)).collect();
    let critical = critical.iter().map(|c| c.expand(eps)).collect();
    (goal, critical)
}

/// Goal and critical sets after augmentation for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRegions {
    pub epsilon: f64,
    pub goal: Vec<Hyperrect>,
    pub critical: Vec<Hyperrect>,
}

impl AugmentedRegions {
    pub fn new(goal: &[Hyperrect], critical: &[Hyperrect], epsilon: f64) -> Self {
        let (goal, critical) = augment_regions(goal, critical, epsilon);
        Self { epsilon, goal, critical }
    }

    /// True when the goal vanished entirely under contraction.
    pub fn goal_vanished(&self) -> bool {
        self.goal.is_empty()
    }
}

/// Per-step augmentation of the reach-avoid sets at confidence `beta`.
#[derive(Debug, Clone)]
pub struct AugmentedSpec {
    pub beta: f64,
    pub by_step: Vec<AugmentedRegions>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{benchmarks, rediscretize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid21() -> Partition {
        let dom = Hyperrect::new(vec![-21.0, -21.0], vec![21.0, 21.0]).unwrap();
        Partition::uniform(&dom, &[21, 21]).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = grid21();
        assert_eq!(p.len(), 441);
        assert!(p.regions().iter().all(|r| r.rect.widths().iter().all(|w| (w - 2.0).abs() < 1e-12)));
        let fine = Partition::uniform(p.domain(), &[41, 41]).unwrap();
        assert_eq!(fine.len(), 1681);

        let unit = Partition::uniform(&Hyperrect::new(vec![0.0], vec![1.0]).unwrap(), &[1]).unwrap();
        assert_eq!(unit.len(), 1);
        assert_eq!(unit.regions()[0].center, vec![0.5]);
        assert_eq!(unit.regions()[0].rect, *unit.domain());

        assert!(Partition::uniform(p.domain(), &[0, 3]).is_err());
    }

    #[test]
    fn region_of_examples() {
        let p = grid21();
        assert_eq!(p.region_of(&[-21.0, -21.0]), Cell::Region(0));
        assert_eq!(p.region_of(&[22.0, 0.0]), Cell::Absorbing);
        assert_eq!(p.region_of(&[0.0, 0.0]), Cell::Region(220));
        assert_eq!(p.region_of(&[21.0, 21.0]), Cell::Region(440));
        // half-open: shared boundary goes to the upper cell's lower edge
        assert_eq!(p.region_of(&[-19.0, -21.0]), Cell::Region(21));
    }

    #[test]
    fn halfspace_form_matches_box() {
        let p = grid21();
        let r = &p.regions()[37];
        for v in r.rect.vertices() {
            let x = DVector::from_column_slice(&v);
            let slack = &r.halfspace_b - &r.halfspace_m * x;
            assert!(slack.iter().all(|s| *s >= -1e-12));
            assert_eq!(slack.iter().filter(|s| s.abs() < 1e-12).count(), 2);
        }
        assert_eq!(r.center, r.rect.center());
    }

    #[test]
    fn partition_covers_domain() {
        let p = Partition::uniform(&Hyperrect::new(vec![-3.0, 0.0, 1.0], vec![3.0, 2.5, 4.0]).unwrap(), &[7, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|a| rng.random_range(p.domain().lo[a]..=p.domain().hi[a])).collect();
            match p.region_of(&x) {
                Cell::Region(i) => assert!(p.regions()[i].rect.contains(&x)),
                Cell::Absorbing => panic!("point {x:?} inside domain mapped to absorbing"),
            }
        }
        for r in p.regions() {
            assert_eq!(p.region_of(&r.center), Cell::Region(r.index));
        }
    }

    fn di_two() -> LtiSystem {
        rediscretize(&benchmarks::double_integrator_raw().unwrap(), 2).unwrap().lifted().clone()
    }

    #[test]
    fn backward_set_examples() {
        let sys = di_two();
        let set = BackwardSet::new(&sys, &[0.0, 0.0]).unwrap();
        assert!(set.contains(&[0.0, 0.0]));
        // required input (5,5) exactly on the box corner
        assert!(set.contains(&[10.0, -10.0]));
        // required input (5,6) violates the second component
        assert!(!set.contains(&[11.5, -11.0]));
    }

    #[test]
    fn region_containment_examples() {
        let sys = di_two();
        let set = BackwardSet::new(&sys, &[0.0, 0.0]).unwrap();
        assert!(set.contains_region(&Hyperrect::point(&[10.0, -10.0])));
        let around = Hyperrect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(set.contains_region(&around));
        let straddle = Hyperrect::new(vec![10.5, -11.5], vec![12.5, -10.5]).unwrap();
        assert!(!set.contains_region(&straddle));

        let oracle = ContainmentOracle::new(&sys).unwrap();
        assert!(oracle.contains_region(&around, &[0.0, 0.0]));
        assert!(!oracle.contains_region(&straddle, &[0.0, 0.0]));
    }

    #[test]
    fn rank_deficient_input_is_a_config_error() {
        let raw = benchmarks::double_integrator_raw().unwrap();
        assert!(matches!(BackwardSet::new(&raw, &[0.0, 0.0]), Err(Error::Config(_))));
        assert!(matches!(ContainmentOracle::new(&raw), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_agrees_with_vertex_lps() {
        let sys = di_two();
        let p = Partition::uniform(&sys.state_domain, &[11, 11]).unwrap();
        let oracle = ContainmentOracle::new(&sys).unwrap();
        for target in [0usize, 17, 60, 99] {
            let d = &p.regions()[target].center;
            let set = BackwardSet::new(&sys, d).unwrap();
            for r in p.regions() {
                assert_eq!(oracle.contains_region(&r.rect, d), set.contains_region(&r.rect), "region {} target {target}", r.index);
            }
        }
    }

    #[test]
    fn containment_is_sound_for_interior_points() {
        // Wide input matrix exercises the LP path.
        let sys = rediscretize(&di_two(), 2).unwrap().lifted().clone();
        let p = Partition::uniform(&sys.state_domain, &[9, 9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for target in [10usize, 40, 44] {
            let set = BackwardSet::new(&sys, &p.regions()[target].center).unwrap();
            for r in p.regions() {
                if !set.contains_region(&r.rect) {
                    continue;
                }
                checked += 1;
                for _ in 0..1000 / 10 {
                    let x: Vec<f64> = (0..2).map(|a| rng.random_range(r.rect.lo[a]..=r.rect.hi[a])).collect();
                    assert!(set.contains(&x));
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn augmentation_examples() {
        let goal = Hyperrect::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let crit = Hyperrect::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (g, c) = augment_regions(&[goal.clone()], &[crit.clone()], 0.0);
        assert_eq!((g[0].clone(), c[0].clone()), (goal.clone(), crit.clone()));
        let (g, _) = augment_regions(&[goal.clone()], &[], 1.0);
        assert_eq!(g[0], Hyperrect::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap());
        let (_, c) = augment_regions(&[], &[crit], 0.5);
        assert_eq!(c[0], Hyperrect::new(vec![-0.5, -0.5], vec![1.5, 1.5]).unwrap());
        let (g, _) = augment_regions(&[goal], &[], 3.0);
        assert!(g.is_empty());
    }

    #[test]
    fn subtraction_is_exact() {
        let outer = Hyperrect::new(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
        let holes = [
            Hyperrect::new(vec![1.0, 1.0], vec![2.0, 3.0]).unwrap(),
            Hyperrect::new(vec![1.5, 2.0], vec![5.0, 5.0]).unwrap(),
        ];
        let pieces = outer.subtract(&holes);
        let vol = |r: &Hyperrect| r.widths().iter().product::<f64>();
        let union = disjoint_union(&holes);
        let covered: f64 = union.iter().filter_map(|h| h.intersect(&outer)).map(|h| vol(&h)).sum();
        let left: f64 = pieces.iter().map(vol).sum();
        assert!((left + covered - 16.0).abs() < 1e-12);
        for (i, a) in pieces.iter().enumerate() {
            assert!(holes.iter().all(|h| !a.overlaps_interior(h)));
            for b in &pieces[i + 1..] {
                assert!(!a.overlaps_interior(b));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn augmentation_keeps_goal_and_critical_apart(
            gx in -5.0f64..5.0, gw in 0.1f64..4.0, cx in -5.0f64..5.0, cw in 0.1f64..4.0, eps in 0.0f64..3.0
        ) {
            let goal = Hyperrect::new(vec![gx, 0.0], vec![gx + gw, 1.0]).unwrap();
            let crit = Hyperrect::new(vec![cx, 0.0], vec![cx + cw, 1.0]).unwrap();
            proptest::prop_assume!(!goal.overlaps_interior(&crit));
            let (g, c) = augment_regions(&[goal.clone()], &[crit.clone()], eps);
            for gg in &g {
                proptest::prop_assert!(goal.contains_rect(gg));
                for cc in &c {
                    proptest::prop_assert!(!gg.overlaps_interior(cc));
                }
            }
            proptest::prop_assert!(c[0].contains_rect(&crit));
        }
    }
}
