//! Kalman filter prediction/correction and the covariance recursion that
//! drives the abstraction.
//!
//! Covariances never depend on the applied inputs, so the whole schedule of
//! predicted, posterior and mean-dynamics covariances can be computed ahead
//! of planning.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{Gaussian, LtiSystem};

/// Covariances (and, during simulation, the innovation) of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanStep {
    pub predicted_mean: Option<DVector<f64>>,
    pub predicted_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub posterior_cov: DMatrix<f64>,
    /// Covariance of the next posterior mean around the predicted mean,
    /// before the measurement is known.
    pub mean_dyn_cov: DMatrix<f64>,
    pub innovation: Option<DVector<f64>>,
}

/// Default sup-norm tolerance for steady-state detection.
pub const STEADY_TOL: f64 = 1e-8;

/// Prediction step: `A mu + B u + mu_w` and `A Sigma A^T + Sigma_w`.
pub fn predict(sys: &LtiSystem, belief: &Gaussian, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    dim_check(belief.dim() == sys.state_dim(), || "belief dimension".into())?;
    sys.check_input(u)?;
    let mean = &sys.a * belief.mean() + &sys.b * u + sys.process_noise.mean();
    Ok((mean, predict_cov(sys, belief.cov())))
}

pub fn predict_cov(sys: &LtiSystem, cov: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(&sys.a * cov * sys.a.transpose() + sys.process_noise.cov()))
}

fn innovation_cov(sys: &LtiSystem, predicted_cov: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(&sys.c * predicted_cov * sys.c.transpose() + &sys.meas_noise_cov))
}

/// Optimal gain `Sigma_hat C^T (C Sigma_hat C^T + Sigma_v)^-1`.
///
/// The innovation covariance is inverted through its Cholesky factor; a
/// singular innovation covariance is reported rather than pseudo-inverted.
pub fn gain(sys: &LtiSystem, predicted_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = innovation_cov(sys, predicted_cov);
    let s_inv = linalg::spd_inverse(&s, "innovation covariance")?;
    Ok(predicted_cov * sys.c.transpose() * s_inv)
}

/// Posterior covariance `(I - K C) Sigma_hat` and mean-dynamics covariance
/// `K (C Sigma_hat C^T + Sigma_v) K^T`, both symmetrized.
pub fn correct_covariance(
    sys: &LtiSystem,
    predicted_cov: &DMatrix<f64>,
    gain: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sys.state_dim();
    let posterior = (DMatrix::identity(n, n) - gain * &sys.c) * predicted_cov;
    let mean_dyn = gain * innovation_cov(sys, predicted_cov) * gain.transpose();
    (symmetrize(&posterior), symmetrize(&mean_dyn))
}

/// Posterior mean `mu_hat + K (y - C mu_hat)`.
pub fn correct_mean(
    predicted_mean: &DVector<f64>,
    gain: &DMatrix<f64>,
    c: &DMatrix<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    predicted_mean + gain * (y - c * predicted_mean)
}

/// Control-free covariance update from a prior posterior covariance.
pub fn covariance_step(sys: &LtiSystem, prior_cov: &DMatrix<f64>) -> Result<KalmanStep> {
    let predicted_cov = predict_cov(sys, prior_cov);
    let gain = gain(sys, &predicted_cov)?;
    let (posterior_cov, mean_dyn_cov) = correct_covariance(sys, &predicted_cov, &gain);
    Ok(KalmanStep { predicted_mean: None, predicted_cov, gain, posterior_cov, mean_dyn_cov, innovation: None })
}

/// Covariance steps `1..=horizon` starting from `sigma0` with one system
/// for every step.
pub fn covariance_schedule(sys: &LtiSystem, sigma0: &DMatrix<f64>, horizon: usize) -> Result<Vec<KalmanStep>> {
    let systems = vec![sys; horizon];
    covariance_schedule_with(sigma0, &systems)
}

/// Like [`covariance_schedule`] but with a (possibly multi-rate) system per step.
pub fn covariance_schedule_with(sigma0: &DMatrix<f64>, systems: &[&LtiSystem]) -> Result<Vec<KalmanStep>> {
    let mut out = Vec::with_capacity(systems.len());
    let mut prior = sigma0.clone();
    for sys in systems {
        let step = covariance_step(sys, &prior)?;
        prior = step.posterior_cov.clone();
        out.push(step);
    }
    Ok(out)
}

/// Iterates the posterior covariance recursion until successive iterates
/// differ by less than `tol` in sup-norm. Returns the iteration count and
/// the limit, or `None` if `max_iter` is exhausted.
pub fn steady_state(sys: &LtiSystem, sigma0: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Option<(usize, KalmanStep)>> {
    let mut prior = sigma0.clone();
    for k in 1..=max_iter {
        let step = covariance_step(sys, &prior)?;
        if linalg::sup_norm_diff(&step.posterior_cov, &prior) < tol {
            return Ok(Some((k, step)));
        }
        prior = step.posterior_cov.clone();
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hyperrect;
    use crate::linalg::{diag, min_eigenvalue};
    use crate::model::benchmarks;
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64, c: f64, q: f64, r: f64) -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, c),
            Gaussian::zero_mean(DMatrix::from_element(1, 1, q)).unwrap(),
            DMatrix::from_element(1, 1, r),
            Hyperrect::new(vec![-10.0], vec![10.0]).unwrap(),
            Hyperrect::new(vec![-10.0], vec![10.0]).unwrap(),
        )
        .unwrap()
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn predict_examples() {
        let sys = scalar(1.0, 1.0, 0.0, 1.0);
        let b = Gaussian::new(DVector::from_element(1, 0.0), m1(1.0)).unwrap();
        let (mean, cov) = predict(&sys, &b, &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!((mean[0], cov[(0, 0)]), (0.0, 1.0));

        let di = benchmarks::double_integrator_raw().unwrap();
        let b = Gaussian::new(DVector::from_column_slice(&[1.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let (mean, cov) = predict(&di, &b, &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(mean, DVector::from_column_slice(&[2.0, 1.0]));
        assert_eq!(&cov, di.process_noise.cov());

        let sys = scalar(1.0, 1.0, 0.25, 1.0);
        let b = Gaussian::new(DVector::from_element(1, 0.0), m1(1.0)).unwrap();
        let (_, cov) = predict(&sys, &b, &DVector::from_element(1, 0.0)).unwrap();
        assert_abs_diff_eq!(cov[(0, 0)], 1.25);

        assert!(predict(&sys, &b, &DVector::from_element(1, 11.0)).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_abs_diff_eq!(gain(&scalar(1.0, 1.0, 0.0, 1.0), &m1(1.0)).unwrap()[(0, 0)], 0.5);
        assert_abs_diff_eq!(gain(&scalar(1.0, 1.0, 0.0, 0.3), &m1(0.0)).unwrap()[(0, 0)], 0.0);
        let k = gain(&scalar(1.0, 1.0, 0.0, 1e-12), &m1(1.0)).unwrap()[(0, 0)];
        assert!((k - 1.0).abs() < 1e-9);
        assert!(gain(&scalar(1.0, 1.0, 0.0, 0.0), &m1(0.0)).is_err());
    }

    #[test]
    fn correction_examples() {
        let sys = scalar(1.0, 1.0, 0.0, 1.0);
        let (post, md) = correct_covariance(&sys, &m1(1.0), &m1(0.5));
        assert_abs_diff_eq!(post[(0, 0)], 0.5);
        assert_abs_diff_eq!(md[(0, 0)], 0.5);
        let (post, md) = correct_covariance(&sys, &m1(1.0), &m1(0.0));
        assert_abs_diff_eq!(post[(0, 0)], 1.0);
        assert_abs_diff_eq!(md[(0, 0)], 0.0);

        let perfect = LtiSystem { meas_noise_cov: diag(&[1e-14, 1e-14]), c: DMatrix::identity(2, 2), ..benchmarks::double_integrator().unwrap().system };
        let pred = diag(&[2.0, 3.0]);
        let k = gain(&perfect, &pred).unwrap();
        let (post, md) = correct_covariance(&perfect, &pred, &k);
        assert!(post.amax() < 1e-9);
        assert!((md - pred).amax() < 1e-9);

        let mu = DVector::from_element(1, 0.0);
        assert_abs_diff_eq!(correct_mean(&mu, &m1(0.5), &m1(1.0), &DVector::from_element(1, 2.0))[0], 1.0);
        let mu = DVector::from_element(1, 3.0);
        assert_eq!(correct_mean(&mu, &m1(0.7), &m1(1.0), &DVector::from_element(1, 3.0)), mu);
        assert_eq!(correct_mean(&mu, &m1(0.0), &m1(1.0), &DVector::from_element(1, -9.0)), mu);
    }

    #[test]
    fn schedule_single_step_is_composition() {
        let spec = benchmarks::double_integrator().unwrap();
        let s0 = spec.initial_belief.cov();
        let sched = covariance_schedule(&spec.system, s0, 1).unwrap();
        let pred = predict_cov(&spec.system, s0);
        let k = gain(&spec.system, &pred).unwrap();
        let (post, md) = correct_covariance(&spec.system, &pred, &k);
        assert_eq!(sched[0].posterior_cov, post);
        assert_eq!(sched[0].mean_dyn_cov, md);
    }

    #[test]
    fn scalar_fixed_point() {
        let sys = scalar(1.0, 1.0, 1.0, 1.0);
        let (_, step) = steady_state(&sys, &m1(1.0), 1e-13, 200).unwrap().unwrap();
        assert!((step.posterior_cov[(0, 0)] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn double_integrator_schedule_converges() {
        let spec = benchmarks::double_integrator().unwrap();
        let sched = covariance_schedule(&spec.system, spec.initial_belief.cov(), 60).unwrap();
        let k = (1..sched.len())
            .find(|&k| linalg::sup_norm_diff(&sched[k].posterior_cov, &sched[k - 1].posterior_cov) < 1e-8)
            .unwrap();
        assert!(k <= 50);
        for s in &sched {
            for m in [&s.predicted_cov, &s.posterior_cov, &s.mean_dyn_cov] {
                assert!(min_eigenvalue(m) >= -1e-10);
            }
            assert!(min_eigenvalue(&(&s.predicted_cov - &s.posterior_cov)) >= -1e-10);
        }
    }
}
