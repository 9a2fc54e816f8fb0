//! Successor distributions of one abstract action: the mass that the next
//! belief mean puts on each partition region, on the goal and critical
//! sets, and outside the domain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{normal, to_interval, BoxProbability, ProbConfig, ProbInterval};
use crate::error::{dim_check, Result};
use crate::geometry::{disjoint_union, AugmentedRegions, Hyperrect, Partition};

/// Target of an abstract transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Successor {
    Region(usize),
    Goal,
    Critical,
    Absorbing,
}

/// Goal and critical sets of one step, clipped to the domain and split into
/// boxes with disjoint interiors.
#[derive(Debug, Clone)]
pub struct SuccessorGeometry<'a> {
    partition: &'a Partition,
    goal: Vec<Hyperrect>,
    critical: Vec<Hyperrect>,
}

impl<'a> SuccessorGeometry<'a> {
    pub fn new(partition: &'a Partition, aug: &AugmentedRegions) -> Self {
        let clip = |boxes: &[Hyperrect]| -> Vec<Hyperrect> {
            let clipped: Vec<Hyperrect> = boxes
                .iter()
                .filter_map(|b| b.intersect(partition.domain()))
                .filter(|b| b.is_nondegenerate())
                .collect();
            disjoint_union(&clipped)
        };
        let goal = clip(&aug.goal);
        // Goal and critical sets are disjoint after augmentation; the
        // subtraction only guards against user-supplied overlaps.
        let critical: Vec<Hyperrect> = clip(&aug.critical).iter().flat_map(|c| c.subtract(&goal)).collect();
        Self { partition, goal, critical }
    }

    pub fn partition(&self) -> &Partition {
        self.partition
    }

    pub fn goal(&self) -> &[Hyperrect] {
        &self.goal
    }

    pub fn critical(&self) -> &[Hyperrect] {
        &self.critical
    }

    fn holes_for(&self, rect: &Hyperrect) -> Vec<Hyperrect> {
        self.goal.iter().chain(&self.critical).filter(|h| h.overlaps_interior(rect)).cloned().collect()
    }
}

/// Nominal successor masses for a belief mean distributed as
/// `N(target, eval.cov())`. Masses below `prune_below` are folded into the
/// absorbing state, which takes whatever the listed successors leave of 1.
/// Absorbing mass below `1e-12` is treated as rounding noise and dropped.
pub fn successor_masses(
    eval: &BoxProbability,
    target: &[f64],
    geom: &SuccessorGeometry<'_>,
    prune_below: f64,
) -> Vec<(Successor, f64)> {
    let part = geom.partition;
    let n = part.dim();
    let cov = eval.cov();

    // Per-axis marginal cell masses bound the mass of every region from
    // above; only cells passing the threshold on every axis are integrated.
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            let sd = cov[(a, a)].max(0.0).sqrt();
            let lo = part.domain().lo[a];
            let w = part.widths()[a];
            let cells = part.counts()[a];
            (0..cells)
                .filter(|&c| {
                    let e0 = lo + c as f64 * w;
                    let e1 = if c + 1 == cells { part.domain().hi[a] } else { lo + (c + 1) as f64 * w };
                    let p = if sd > 0.0 {
                        normal::prob_between((e0 - target[a]) / sd, (e1 - target[a]) / sd)
                    } else if target[a] >= e0 && target[a] < e1 {
                        1.0
                    } else {
                        0.0
                    };
                    p > 0.0 && p >= prune_below
                })
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    let total: usize = candidates.iter().map(|c| c.len()).product();
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..n).rev() {
            let len = candidates[a].len();
            idx[a] = candidates[a][rem % len];
            rem /= len;
        }
        let j = part.flat_index(&idx);
        let rect = &part.regions()[j].rect;
        let holes = geom.holes_for(rect);
        let mass = if holes.is_empty() {
            eval.prob(target, rect)
        } else {
            rect.subtract(&holes).iter().map(|p| eval.prob(target, p)).sum()
        };
        if mass > 0.0 && mass >= prune_below {
            out.push((Successor::Region(j), mass));
        }
    }

    for (succ, boxes) in [(Successor::Goal, geom.goal()), (Successor::Critical, geom.critical())] {
        let mass: f64 = boxes.iter().map(|b| eval.prob(target, b)).sum();
        if mass > 0.0 && mass >= prune_below {
            out.push((succ, mass));
        }
    }

    let listed: f64 = out.iter().map(|(_, p)| p).sum();
    if listed > 1.0 {
        for (_, p) in out.iter_mut() {
            *p /= listed;
        }
    } else if 1.0 - listed >= 1e-12 {
        out.push((Successor::Absorbing, 1.0 - listed));
    } else if listed > 0.0 {
        for (_, p) in out.iter_mut() {
            *p /= listed;
        }
    }
    if out.is_empty() {
        out.push((Successor::Absorbing, 1.0));
    }
    out
}

/// Widens nominal masses by `theta` into probability intervals.
pub fn intervals_from_masses(masses: &[(Successor, f64)], theta: f64) -> Vec<(Successor, ProbInterval)> {
    masses.iter().map(|&(s, p)| (s, to_interval(p, theta))).collect()
}

/// Interval successor row for an action targeting `target` when the next
/// belief mean has covariance `mean_dyn_cov`.
pub fn successor_intervals(
    target: &[f64],
    mean_dyn_cov: &DMatrix<f64>,
    partition: &Partition,
    aug: &AugmentedRegions,
    cfg: &ProbConfig,
) -> Result<Vec<(Successor, ProbInterval)>> {
    cfg.validate()?;
    dim_check(target.len() == partition.dim() && mean_dyn_cov.nrows() == partition.dim(), || {
        "target and covariance must match the partition dimension".into()
    })?;
    let eval = BoxProbability::new(mean_dyn_cov, cfg)?;
    let geom = SuccessorGeometry::new(partition, aug);
    let masses = successor_masses(&eval, target, &geom, cfg.prune_below);
    Ok(intervals_from_masses(&masses, cfg.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    fn grid21() -> Partition {
        Partition::uniform(&Hyperrect::new(vec![-21.0; 2], vec![21.0; 2]).unwrap(), &[21, 21]).unwrap()
    }

    fn goal() -> Vec<Hyperrect> {
        vec![Hyperrect::new(vec![-3.0; 2], vec![3.0; 2]).unwrap()]
    }

    #[test]
    fn point_mass_inside_goal() {
        let part = grid21();
        let aug = AugmentedRegions::new(&goal(), &[], 0.5);
        let cfg = ProbConfig::default();
        let row = successor_intervals(&[0.0, 0.0], &DMatrix::zeros(2, 2), &part, &aug, &cfg).unwrap();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].0, Successor::Goal);
        assert!((row[0].1.lo - 0.99).abs() < 1e-15 && row[0].1.hi == 1.0);
    }

    #[test]
    fn unit_covariance_at_origin() {
        let part = grid21();
        let aug = AugmentedRegions::new(&goal(), &[], 0.0);
        let cfg = ProbConfig { prune_below: 0.0, ..ProbConfig::default() };
        let eval = BoxProbability::new(&diag(&[1.0, 1.0]), &cfg).unwrap();
        let geom = SuccessorGeometry::new(&part, &aug);
        let masses = successor_masses(&eval, &[0.0, 0.0], &geom, 0.0);
        let g = masses.iter().find(|(s, _)| *s == Successor::Goal).unwrap().1;
        let want = (2.0 * normal::cdf(3.0) - 1.0).powi(2);
        assert!((g - want).abs() < 1e-12);
        assert!((want - 0.9946076967722628).abs() < 1e-12);
        let total: f64 = masses.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Regions outside the goal carry exactly their box mass.
        let r0 = masses.iter().find(|(s, _)| *s == Successor::Region(220 + 2)).unwrap().1;
        let want = normal::prob_between(-1.0, 1.0) * normal::prob_between(3.0, 5.0);
        assert!((r0 - want).abs() < 1e-14);
    }
}
