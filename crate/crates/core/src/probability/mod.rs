//! Gaussian probabilities of boxes, probability intervals, and the error
//! bound that links belief means to actual states.

pub mod bvn;
pub mod normal;
pub mod qmc;
mod successor;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::geometry::Hyperrect;
use crate::linalg::{self, PSD_TOL};

pub use successor::{intervals_from_masses, successor_intervals, successor_masses, Successor, SuccessorGeometry};

/// Settings for probability estimation and interval construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbConfig {
    /// Half-width added around every estimated transition probability.
    pub theta: f64,
    /// Lattice points per randomization for the general-covariance integrator.
    pub qmc_points: usize,
    /// Number of random shifts; the spread across them gives the error estimate.
    pub qmc_shifts: usize,
    pub seed: u64,
    /// Successor masses below this are folded into the absorbing state.
    pub prune_below: f64,
}

impl Default for ProbConfig {
    fn default() -> Self {
        Self { theta: 0.01, qmc_points: 2048, qmc_shifts: 8, seed: 0x6b61_6c6d, prune_below: 1e-4 }
    }
}

impl ProbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.qmc_points == 0 || self.qmc_shifts == 0 {
            return Err(Error::InvalidInput("QMC budget must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.prune_below) {
            return Err(Error::InvalidInput(format!("prune threshold must lie in [0, 1), got {}", self.prune_below)));
        }
        Ok(())
    }

    fn budget(&self) -> qmc::QmcBudget {
        qmc::QmcBudget { points: self.qmc_points, shifts: self.qmc_shifts, seed: self.seed }
    }
}

/// Interval `[lo, hi]` around a nominal probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbInterval {
    pub lo: f64,
    pub hi: f64,
    pub nominal: f64,
}

impl ProbInterval {
    pub fn new(lo: f64, hi: f64, nominal: f64) -> Result<Self> {
        if !(0.0 <= lo && lo <= nominal && nominal <= hi && hi <= 1.0) {
            return Err(Error::InvalidInput(format!("invalid probability interval [{lo}, {hi}] around {nominal}")));
        }
        Ok(Self { lo, hi, nominal })
    }

    /// Degenerate interval `[p, p]`.
    pub fn exact(p: f64) -> Self {
        Self { lo: p, hi: p, nominal: p }
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &ProbInterval) -> ProbInterval {
        ProbInterval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi), nominal: self.nominal }
    }
}

/// `[max(0, p - theta), min(1, p + theta)]` around `p`.
pub fn to_interval(p: f64, theta: f64) -> ProbInterval {
    let p = p.clamp(0.0, 1.0);
    ProbInterval { lo: (p - theta).max(0.0), hi: (p + theta).min(1.0), nominal: p }
}

#[derive(Debug, Clone)]
enum BlockKind {
    /// All variances zero: a point mass at the mean.
    Point,
    Scalar { sd: f64 },
    /// Rank one: the mass lies on the line `mean + t v`, `t ~ N(0, 1)`.
    Line { v: Vec<f64> },
    Bivariate { sd: [f64; 2], rho: f64 },
    General { chol: DMatrix<f64> },
}

#[derive(Debug, Clone)]
struct Block {
    axes: Vec<usize>,
    kind: BlockKind,
}

/// Box probabilities under a fixed covariance and varying means.
///
/// The covariance is split into independent blocks (connected components
/// of its sparsity pattern). Each block is evaluated exactly when it is a
/// point mass, one-dimensional, rank one or bivariate, and by randomized
/// QMC otherwise.
#[derive(Debug, Clone)]
pub struct BoxProbability {
    dim: usize,
    blocks: Vec<Block>,
    cov: DMatrix<f64>,
    cfg: ProbConfig,
}

const ZERO_REL: f64 = 1e-14;
const RANK_REL: f64 = 1e-12;

impl BoxProbability {
    pub fn new(cov: &DMatrix<f64>, cfg: &ProbConfig) -> Result<Self> {
        dim_check(cov.is_square(), || "covariance must be square".into())?;
        let cov = linalg::symmetrize(cov);
        let min_eig = linalg::min_eigenvalue(&cov);
        let scale = cov.amax().max(1.0);
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive semi-definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let n = cov.nrows();
        let maxdiag = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);
        let zero = ZERO_REL * maxdiag;

        // Connected components of the coupling graph.
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while c[r] != r {
                r = c[r];
            }
            c[i] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if cov[(i, j)].abs() > ZERO_REL * (cov[(i, i)] * cov[(j, j)]).sqrt().max(f64::MIN_POSITIVE) {
                    let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                    comp[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_of = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut comp, i);
            if root_of[r] == usize::MAX {
                root_of[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_of[r]].push(i);
        }

        let mut blocks = Vec::with_capacity(groups.len());
        for axes in groups {
            let sub = DMatrix::from_fn(axes.len(), axes.len(), |i, j| cov[(axes[i], axes[j])]);
            let kind = if axes.iter().all(|&a| cov[(a, a)] <= zero) {
                BlockKind::Point
            } else if axes.len() == 1 {
                BlockKind::Scalar { sd: sub[(0, 0)].sqrt() }
            } else {
                let eig = SymmetricEigen::new(sub.clone());
                let (imax, lmax) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
                let rank = eig.eigenvalues.iter().filter(|&&l| l > RANK_REL * lmax).count();
                if rank <= 1 {
                    let s = lmax.sqrt();
                    BlockKind::Line { v: eig.eigenvectors.column(imax).iter().map(|x| x * s).collect() }
                } else if axes.len() == 2 {
                    let sd = [sub[(0, 0)].sqrt(), sub[(1, 1)].sqrt()];
                    BlockKind::Bivariate { sd, rho: (sub[(0, 1)] / (sd[0] * sd[1])).clamp(-1.0, 1.0) }
                } else {
                    BlockKind::General { chol: qmc::psd_cholesky(&sub) }
                }
            };
            blocks.push(Block { axes, kind });
        }
        Ok(Self { dim: n, blocks, cov, cfg: *cfg })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `P(X in rect)` for `X ~ N(mean, cov)`.
    pub fn prob(&self, mean: &[f64], rect: &Hyperrect) -> f64 {
        self.estimate(mean, rect).0
    }

    /// Estimate with an error estimate (zero for the exact block types).
    pub fn estimate(&self, mean: &[f64], rect: &Hyperrect) -> (f64, f64) {
        let mut p = 1.0;
        let mut err = 0.0;
        for block in &self.blocks {
            let (bp, be) = self.block_prob(block, mean, rect);
            // Error of a product of estimates, to first order.
            err = err * bp + be * p;
            p *= bp;
            if p == 0.0 {
                return (0.0, 0.0);
            }
        }
        (p, err)
    }

    fn block_prob(&self, block: &Block, mean: &[f64], rect: &Hyperrect) -> (f64, f64) {
        let axes = &block.axes;
        match &block.kind {
            BlockKind::Point => {
                let inside = axes.iter().all(|&a| half_open_contains(rect.lo[a], rect.hi[a], mean[a]));
                (if inside { 1.0 } else { 0.0 }, 0.0)
            }
            BlockKind::Scalar { sd } => {
                let a = axes[0];
                let p = normal::prob_between((rect.lo[a] - mean[a]) / sd, (rect.hi[a] - mean[a]) / sd);
                (p, 0.0)
            }
            BlockKind::Line { v } => {
                let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let mut tlo = f64::NEG_INFINITY;
                let mut thi = f64::INFINITY;
                for (i, &a) in axes.iter().enumerate() {
                    let (lo, hi, m) = (rect.lo[a], rect.hi[a], mean[a]);
                    if v[i].abs() <= RANK_REL * vmax {
                        if !half_open_contains(lo, hi, m) {
                            return (0.0, 0.0);
                        }
                        continue;
                    }
                    let (t1, t2) = ((lo - m) / v[i], (hi - m) / v[i]);
                    let (t1, t2) = if v[i] > 0.0 { (t1, t2) } else { (t2, t1) };
                    tlo = tlo.max(t1);
                    thi = thi.min(t2);
                }
                (normal::prob_between(tlo, thi), 0.0)
            }
            BlockKind::Bivariate { sd, rho } => {
                let (a, b) = (axes[0], axes[1]);
                let p = bvn::box_prob(
                    (rect.lo[a] - mean[a]) / sd[0],
                    (rect.hi[a] - mean[a]) / sd[0],
                    (rect.lo[b] - mean[b]) / sd[1],
                    (rect.hi[b] - mean[b]) / sd[1],
                    *rho,
                );
                (p, 0.0)
            }
            BlockKind::General { chol } => {
                let lo: Vec<f64> = axes.iter().map(|&a| rect.lo[a] - mean[a]).collect();
                let hi: Vec<f64> = axes.iter().map(|&a| rect.hi[a] - mean[a]).collect();
                if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
                    return (0.0, 0.0);
                }
                qmc::genz_box(chol, &lo, &hi, self.cfg.budget())
            }
        }
    }
}

/// Half-open membership `lo <= x < hi`, with an infinite upper end closed.
fn half_open_contains(lo: f64, hi: f64, x: f64) -> bool {
    x >= lo && (x < hi || hi == f64::INFINITY)
}

/// `P(X in rect)` for `X ~ N(mean, cov)`.
pub fn mvn_box_prob(mean: &[f64], cov: &DMatrix<f64>, rect: &Hyperrect, cfg: &ProbConfig) -> Result<f64> {
    dim_check(mean.len() == cov.nrows() && rect.dim() == mean.len(), || "mean, covariance and box dimensions differ".into())?;
    Ok(BoxProbability::new(cov, cfg)?.prob(mean, rect))
}

/// Smallest `eps` with `P(X in [-eps, eps]^n) >= 1 - beta` for `X ~ N(0, cov)`,
/// by bisection. The returned value is the upper end of the final bracket.
pub fn error_bound(cov: &DMatrix<f64>, beta: f64, cfg: &ProbConfig) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    let eval = BoxProbability::new(cov, cfg)?;
    let n = eval.dim();
    let maxdiag = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);
    if maxdiag <= 0.0 {
        return Ok(0.0);
    }
    let zero = vec![0.0; n];
    let mass = |eps: f64| eval.prob(&zero, &Hyperrect { lo: vec![-eps; n], hi: vec![eps; n] });
    let target = 1.0 - beta;
    let mut lo = 0.0;
    let mut hi = 10.0 * maxdiag.sqrt();
    while mass(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("error bound bracket diverged".into()));
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mass(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
