//! Randomized quasi-Monte Carlo for Gaussian box probabilities using Genz's
//! separation of variables over a Richtmyer lattice.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal;

const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Lower-triangular factor of a PSD matrix. Columns whose pivot falls below
/// `tol` are zeroed, so the corresponding variable is a deterministic
/// function of the earlier ones.
pub fn psd_cholesky(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let scale = (0..n).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

/// Sampling budget for [`genz_box`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcBudget {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
}

/// Estimate and error estimate (three standard errors across the random
/// shifts) of `P(lo <= L z <= hi)` for standard normal `z`, where `lo`/`hi`
/// are already centered at the mean.
pub fn genz_box(l: &DMatrix<f64>, lo: &[f64], hi: &[f64], budget: QmcBudget) -> (f64, f64) {
    let n = l.nrows();
    if n == 0 {
        return (1.0, 0.0);
    }
    let alphas: Vec<f64> = PRIMES.iter().cycle().take(n).map(|p| (*p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut y = vec![0.0; n];
    let mut means = Vec::with_capacity(budget.shifts);
    for _ in 0..budget.shifts.max(1) {
        let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for k in 1..=budget.points.max(1) {
            let mut f = 1.0;
            for i in 0..n {
                let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
                let lii = l[(i, i)];
                if lii == 0.0 {
                    if s < lo[i] || s > hi[i] {
                        f = 0.0;
                        break;
                    }
                    y[i] = 0.0;
                    continue;
                }
                let d = normal::cdf((lo[i] - s) / lii);
                let e = normal::cdf((hi[i] - s) / lii);
                f *= e - d;
                if f <= 0.0 {
                    f = 0.0;
                    break;
                }
                if i + 1 < n {
                    let x = (k as f64 * alphas[i] + shift[i]).fract();
                    let w = (2.0 * x - 1.0).abs();
                    let u = (d + w * (e - d)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                    y[i] = normal::quantile(u);
                }
            }
            acc += f;
        }
        means.push(acc / budget.points.max(1) as f64);
    }
    let m = means.len() as f64;
    let mean = means.iter().sum::<f64>() / m;
    let err = if means.len() > 1 {
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        3.0 * (var / m).sqrt()
    } else {
        f64::NAN
    };
    (mean.clamp(0.0, 1.0), err)
}
