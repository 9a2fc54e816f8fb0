//! Best/worst-case covariance pair enclosing a set of covariances in the
//! PSD order.

use nalgebra::DMatrix;

use crate::error::{dim_check, Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue};

/// `lower <= sigma <= upper` (PSD order) for every generating `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub upper: DMatrix<f64>,
    pub lower: DMatrix<f64>,
}

impl CovariancePair {
    /// True when `lower <= sigma <= upper` up to `tol`.
    pub fn encloses(&self, sigma: &DMatrix<f64>, tol: f64) -> bool {
        min_eigenvalue(&(&self.upper - sigma)) >= -tol && min_eigenvalue(&(sigma - &self.lower)) >= -tol
    }
}

const BISECT_STEPS: usize = 80;

/// Feasible (not necessarily tightest) enclosing pair for `covs`.
///
/// Both bounds are scalings of the last element: `upper = c+ S` with the
/// smallest `c+ >= 1` and `lower = c- S` with the largest `c- <= 1` that
/// keep every difference PSD, found by bisection on the minimum
/// eigenvalue. A singular reference cannot be scaled over members outside
/// its range, so `upper` is then `S + l I` with the smallest such `l`.
pub fn covariance_pair(covs: &[DMatrix<f64>]) -> Result<CovariancePair> {
    let reference = covs.last().ok_or_else(|| Error::InvalidInput("covariance pair of an empty set".into()))?;
    let n = reference.nrows();
    for c in covs {
        dim_check(c.nrows() == n && c.ncols() == n, || "covariances in a pair must share one dimension".into())?;
    }
    let scale = covs.iter().map(|c| c.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    let up_gap = |c: f64| covs.iter().map(|s| min_eigenvalue(&(reference * c - s))).fold(f64::INFINITY, f64::min);
    let low_gap = |c: f64| covs.iter().map(|s| min_eigenvalue(&(s - reference * c))).fold(f64::INFINITY, f64::min);

    let additive = || {
        let shift = covs.iter().map(|s| max_eigenvalue(&(s - reference))).fold(0.0, f64::max) + tol;
        reference + DMatrix::identity(n, n) * shift
    };
    let upper = if up_gap(1.0) >= -tol {
        reference.clone()
    } else if min_eigenvalue(reference) <= 1e-9 * scale {
        additive()
    } else {
        let mut lo = 1.0;
        let mut hi = 2.0;
        while up_gap(hi) < -tol && hi < 1e12 {
            lo = hi;
            hi *= 2.0;
        }
        if up_gap(hi) >= -tol {
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                if up_gap(mid) >= -tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            reference * hi
        } else {
            additive()
        }
    };

    let lower = if low_gap(1.0) >= -tol {
        reference.clone()
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECT_STEPS {
            let mid = 0.5 * (lo + hi);
            if low_gap(mid) >= -tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        reference * lo
    };
    Ok(CovariancePair { upper, lower })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    #[test]
    fn singleton() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let p = covariance_pair(&[s.clone()]).unwrap();
        assert_eq!(p.upper, s);
        assert_eq!(p.lower, s);
    }

    #[test]
    fn scaled_identities() {
        let i = DMatrix::identity(2, 2);
        let p = covariance_pair(&[i.clone(), &i * 2.0]).unwrap();
        assert!((p.upper - &i * 2.0).amax() < 1e-12);
        assert!((p.lower - &i).amax() < 1e-9);
    }

    #[test]
    fn crossing_diagonals() {
        let p = covariance_pair(&[diag(&[1.0, 2.0]), diag(&[2.0, 1.0])]).unwrap();
        assert!((p.upper - diag(&[4.0, 2.0])).amax() < 1e-9);
        assert!((p.lower - diag(&[1.0, 0.5])).amax() < 1e-9);
    }

    #[test]
    fn singular_reference_uses_additive_fallback() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 0.81]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = covariance_pair(&[a.clone(), b.clone()]).unwrap();
        for s in [&a, &b] {
            assert!(p.encloses(s, 1e-9));
        }
        // Stays close to the reference instead of scaling it without bound.
        assert!((&p.upper - &b).amax() < 0.1);
        assert!(covariance_pair(&[]).is_err());
    }
}
