//! Linear time-invariant systems with Gaussian noise, their multi-step
//! rediscretization, and the built-in benchmark instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::geometry::Hyperrect;
use crate::linalg::{self, PSD_TOL};

/// Multivariate Gaussian given by mean and covariance.
///
/// The covariance is symmetrized on construction and must be positive
/// semi-definite up to [`PSD_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        dim_check(cov.is_square() && cov.nrows() == mean.len(), || {
            format!(
                "gaussian mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )
        })?;
        let cov = linalg::symmetrize(&cov);
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive semi-definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `x+ = A x + B u + w`, `y = C x + v` with `w ~ N(mu_w, Sigma_w)` and
/// `v ~ N(0, Sigma_v)`, inputs restricted to `control_box`, and the modeled
/// state domain `state_domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub process_noise: Gaussian,
    pub meas_noise_cov: DMatrix<f64>,
    pub control_box: Hyperrect,
    pub state_domain: Hyperrect,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        process_noise: Gaussian,
        meas_noise_cov: DMatrix<f64>,
        control_box: Hyperrect,
        state_domain: Hyperrect,
    ) -> Result<Self> {
        let n = a.nrows();
        dim_check(a.is_square(), || format!("A is {}x{}", a.nrows(), a.ncols()))?;
        dim_check(b.nrows() == n, || format!("B has {} rows, expected {n}", b.nrows()))?;
        dim_check(c.ncols() == n, || format!("C has {} columns, expected {n}", c.ncols()))?;
        dim_check(process_noise.dim() == n, || {
            format!("process noise has dimension {}, expected {n}", process_noise.dim())
        })?;
        let q = c.nrows();
        dim_check(meas_noise_cov.nrows() == q && meas_noise_cov.ncols() == q, || {
            format!("measurement noise covariance must be {q}x{q}")
        })?;
        dim_check(control_box.dim() == b.ncols(), || {
            format!("control box has dimension {}, expected {}", control_box.dim(), b.ncols())
        })?;
        dim_check(state_domain.dim() == n, || {
            format!("state domain has dimension {}, expected {n}", state_domain.dim())
        })?;
        if !control_box.is_nondegenerate() || !state_domain.is_nondegenerate() {
            return Err(Error::InvalidInput(
                "control box and state domain need lower < upper on every axis".into(),
            ));
        }
        let meas_noise_cov = linalg::symmetrize(&meas_noise_cov);
        if !linalg::is_psd(&meas_noise_cov, PSD_TOL) {
            return Err(Error::InvalidInput(
                "measurement noise covariance is not positive semi-definite".into(),
            ));
        }
        Ok(Self { a, b, c, process_noise, meas_noise_cov, control_box, state_domain })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub(crate) fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        dim_check(u.len() == self.input_dim(), || {
            format!("input has {} entries, expected {}", u.len(), self.input_dim())
        })?;
        if !self.control_box.contains_with_tol(u.as_slice(), 1e-9) {
            return Err(Error::InvalidInput(format!(
                "control {:?} lies outside the control box",
                u.as_slice()
            )));
        }
        Ok(())
    }

    /// One step of the process equation: `A x + B u + w`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.state_dim();
        dim_check(x.len() == n && w.len() == n, || {
            format!("state/noise must have {n} entries")
        })?;
        self.check_input(u)?;
        Ok(&self.a * x + &self.b * u + w)
    }

    /// Measurement equation: `C x + v`.
    pub fn measure(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        dim_check(x.len() == self.state_dim() && v.len() == self.output_dim(), || {
            "state or measurement noise has the wrong dimension".to_string()
        })?;
        Ok(&self.c * x + v)
    }
}

/// A system whose `delta` consecutive base steps are merged into one step
/// with a stacked input and a single measurement at the end.
#[derive(Debug, Clone)]
pub struct MultirateSystem {
    base: LtiSystem,
    delta: usize,
    lifted: LtiSystem,
}

impl MultirateSystem {
    pub fn base(&self) -> &LtiSystem {
        &self.base
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// The merged system viewed as an ordinary LTI system with matrices
    /// `A^delta`, `[A^(delta-1) B, ..., B]` and accumulated noise.
    pub fn lifted(&self) -> &LtiSystem {
        &self.lifted
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.lifted.a
    }

    pub fn b_bar(&self) -> &DMatrix<f64> {
        &self.lifted.b
    }

    pub fn acc_noise(&self) -> &Gaussian {
        &self.lifted.process_noise
    }

    pub fn control_box_bar(&self) -> &Hyperrect {
        &self.lifted.control_box
    }

    /// Splits a stacked input into the per-step inputs, first step first.
    pub fn split_input(&self, u_bar: &DVector<f64>) -> Vec<DVector<f64>> {
        let p = self.base.input_dim();
        (0..self.delta)
            .map(|i| u_bar.rows(i * p, p).into_owned())
            .collect()
    }
}

/// Merges `delta` base steps of `sys` into one.
pub fn rediscretize(sys: &LtiSystem, delta: usize) -> Result<MultirateSystem> {
    if delta == 0 {
        return Err(Error::InvalidInput("rate must be at least 1".into()));
    }
    let n = sys.state_dim();
    let p = sys.input_dim();
    let powers: Vec<DMatrix<f64>> = (0..delta).map(|k| linalg::matrix_power(&sys.a, k)).collect();
    let a_bar = &powers[delta - 1] * &sys.a;

    let mut b_bar = DMatrix::zeros(n, delta * p);
    for i in 0..delta {
        let block = &powers[delta - 1 - i] * &sys.b;
        b_bar.view_mut((0, i * p), (n, p)).copy_from(&block);
    }

    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for i in 1..=delta {
        let prop = &powers[delta - i];
        mean += prop * sys.process_noise.mean();
        cov += prop * sys.process_noise.cov() * prop.transpose();
    }
    let acc_noise = Gaussian::new(mean, cov)?;

    let mut lo = Vec::with_capacity(delta * p);
    let mut hi = Vec::with_capacity(delta * p);
    for _ in 0..delta {
        lo.extend_from_slice(&sys.control_box.lo);
        hi.extend_from_slice(&sys.control_box.hi);
    }
    let lifted = LtiSystem {
        a: a_bar,
        b: b_bar,
        c: sys.c.clone(),
        process_noise: acc_noise,
        meas_noise_cov: sys.meas_noise_cov.clone(),
        control_box: Hyperrect::new(lo, hi)?,
        state_domain: sys.state_domain.clone(),
    };
    Ok(MultirateSystem { base: sys.clone(), delta, lifted })
}

/// A reach-avoid planning problem over an LTI system.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub name: String,
    pub system: LtiSystem,
    /// Initial belief covariance (the mean is set per initial region).
    pub initial_belief: Gaussian,
    pub horizon: usize,
    pub goal_regions: Vec<Hyperrect>,
    pub critical_regions: Vec<Hyperrect>,
    pub noise_scale: f64,
    /// Default partition cell counts per state axis.
    pub grid: Vec<usize>,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::InvalidInput("noise scale must be positive".into()));
        }
        dim_check(self.initial_belief.dim() == n, || "initial belief dimension".into())?;
        dim_check(self.grid.len() == n, || format!("grid needs {n} axis counts"))?;
        for r in self.goal_regions.iter().chain(&self.critical_regions) {
            dim_check(r.dim() == n, || "goal/critical region dimension".into())?;
            if r.intersect(&self.system.state_domain).is_none() {
                return Err(Error::InvalidInput(format!(
                    "region {r:?} does not intersect the state domain"
                )));
            }
        }
        for g in &self.goal_regions {
            for c in &self.critical_regions {
                if g.overlaps_interior(c) {
                    return Err(Error::InvalidInput(format!(
                        "goal {g:?} overlaps critical region {c:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Names of the built-in benchmark configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    DoubleIntegrator,
    Motion2d,
    Motion3d,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Self::DoubleIntegrator, Self::Motion2d, Self::Motion3d];

    pub fn name(self) -> &'static str {
        match self {
            Self::DoubleIntegrator => "double-integrator",
            Self::Motion2d => "motion-2d",
            Self::Motion3d => "motion-3d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn spec(self, noise_scale: f64) -> Result<BenchmarkSpec> {
        match self {
            Self::DoubleIntegrator => benchmarks::double_integrator(),
            Self::Motion2d => benchmarks::motion_2d(noise_scale),
            Self::Motion3d => benchmarks::motion_3d(noise_scale),
        }
    }
}

pub mod benchmarks {
    //! Concrete problem instances.

    use super::*;
    use crate::linalg::diag;

    fn block_integrators(axes: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = 2 * axes;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, axes);
        let mut c = DMatrix::zeros(axes, n);
        for i in 0..axes {
            a[(2 * i, 2 * i)] = 1.0;
            a[(2 * i, 2 * i + 1)] = 1.0;
            a[(2 * i + 1, 2 * i + 1)] = 1.0;
            b[(2 * i, i)] = 0.5;
            b[(2 * i + 1, i)] = 1.0;
            c[(i, 2 * i)] = 1.0;
        }
        (a, b, c)
    }

    /// The one-step double integrator: position/velocity with a position sensor.
    pub fn double_integrator_raw() -> Result<LtiSystem> {
        let (a, b, c) = block_integrators(1);
        LtiSystem::new(
            a,
            b,
            c,
            Gaussian::zero_mean(diag(&[0.25, 0.25]))?,
            diag(&[0.25]),
            Hyperrect::new(vec![-5.0], vec![5.0])?,
            Hyperrect::new(vec![-21.0, -21.0], vec![21.0, 21.0])?,
        )
    }

    /// Double integrator with every two steps merged so the input matrix is
    /// square and invertible.
    pub fn double_integrator() -> Result<BenchmarkSpec> {
        let merged = rediscretize(&double_integrator_raw()?, 2)?;
        Ok(BenchmarkSpec {
            name: Benchmark::DoubleIntegrator.name().into(),
            system: merged.lifted().clone(),
            initial_belief: Gaussian::zero_mean(diag(&[2.0, 2.0]))?,
            horizon: 16,
            goal_regions: vec![Hyperrect::new(vec![-3.0, -3.0], vec![3.0, 3.0])?],
            critical_regions: vec![],
            noise_scale: 1.0,
            grid: vec![21, 21],
        })
    }

    fn inf_box(n: usize, bounds: &[(usize, f64, f64)]) -> Result<Hyperrect> {
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for &(axis, l, h) in bounds {
            lo[axis] = l;
            hi[axis] = h;
        }
        Hyperrect::new(lo, hi)
    }

    /// Planar robot (position/velocity per axis, position sensors) with two
    /// steps merged per decision.
    pub fn motion_2d(noise_scale: f64) -> Result<BenchmarkSpec> {
        let (a, b, c) = block_integrators(2);
        let nu = noise_scale;
        let raw = LtiSystem::new(
            a,
            b,
            c,
            Gaussian::zero_mean(diag(&[0.1, 0.02, 0.1, 0.02]) * nu)?,
            diag(&[0.1, 0.1]) * nu,
            Hyperrect::new(vec![-4.0; 2], vec![4.0; 2])?,
            Hyperrect::new(vec![-11.0, -3.75, -11.0, -3.75], vec![11.0, 3.75, 11.0, 3.75])?,
        )?;
        let merged = rediscretize(&raw, 2)?;
        Ok(BenchmarkSpec {
            name: Benchmark::Motion2d.name().into(),
            system: merged.lifted().clone(),
            initial_belief: Gaussian::zero_mean(diag(&[2.0, 0.01, 2.0, 0.01]))?,
            horizon: 12,
            goal_regions: vec![inf_box(4, &[(0, 5.0, 11.0), (2, 5.0, 11.0)])?],
            critical_regions: vec![
                inf_box(4, &[(0, -3.0, 1.0), (2, -11.0, 1.0)])?,
                inf_box(4, &[(0, -3.0, 1.0), (2, 3.0, 11.0)])?,
                inf_box(4, &[(0, 5.0, 11.0), (2, -1.0, 1.0)])?,
            ],
            noise_scale,
            grid: vec![11, 5, 11, 5],
        })
    }

    /// Spatial robot (UAV) analogue of [`motion_2d`].
    pub fn motion_3d(noise_scale: f64) -> Result<BenchmarkSpec> {
        let (a, b, c) = block_integrators(3);
        let nu = noise_scale;
        let raw = LtiSystem::new(
            a,
            b,
            c,
            Gaussian::zero_mean(diag(&[0.1, 0.02, 0.1, 0.02, 0.1, 0.02]) * nu)?,
            diag(&[0.1, 0.1, 0.1]) * nu,
            Hyperrect::new(vec![-4.0; 3], vec![4.0; 3])?,
            Hyperrect::new(
                vec![-11.0, -2.25, -5.0, -2.25, -9.0, -2.25],
                vec![11.0, 2.25, 5.0, 2.25, 9.0, 2.25],
            )?,
        )?;
        let merged = rediscretize(&raw, 2)?;
        Ok(BenchmarkSpec {
            name: Benchmark::Motion3d.name().into(),
            system: merged.lifted().clone(),
            initial_belief: Gaussian::zero_mean(diag(&[2.0, 0.01, 2.0, 0.01, 2.0, 0.01]))?,
            horizon: 12,
            goal_regions: vec![inf_box(6, &[(0, 7.0, 11.0), (2, 1.0, 5.0), (4, -9.0, -3.0)])?],
            critical_regions: vec![
                inf_box(6, &[(0, -1.0, 3.0), (2, -5.0, 5.0), (4, -3.0, 9.0)])?,
                inf_box(6, &[(0, -1.0, 3.0), (2, -5.0, -1.0), (4, -9.0, -3.0)])?,
            ],
            noise_scale,
            grid: vec![11, 3, 5, 3, 9, 3],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn step_examples() {
        let sys = benchmarks::double_integrator_raw().unwrap();
        assert_eq!(sys.step(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(sys.step(&v(&[1.0, 1.0]), &v(&[0.0]), &v(&[0.0, 0.0])).unwrap(), v(&[2.0, 1.0]));
        assert_eq!(sys.step(&v(&[0.0, 0.0]), &v(&[2.0]), &v(&[0.0, 0.0])).unwrap(), v(&[1.0, 2.0]));
        assert!(matches!(
            sys.step(&v(&[0.0, 0.0]), &v(&[6.0]), &v(&[0.0, 0.0])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sys.step(&v(&[0.0]), &v(&[0.0]), &v(&[0.0, 0.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn measure_examples() {
        let sys = benchmarks::double_integrator_raw().unwrap();
        assert_eq!(sys.measure(&v(&[3.0, 7.0]), &v(&[0.0])).unwrap(), v(&[3.0]));
        assert_eq!(sys.measure(&v(&[0.0, 0.0]), &v(&[0.5])).unwrap(), v(&[0.5]));
        let planar = benchmarks::motion_2d(1.0).unwrap();
        assert_eq!(planar.system.measure(&v(&[1.0, 2.0, 3.0, 4.0]), &v(&[0.0, 0.0])).unwrap(), v(&[1.0, 3.0]));
    }

    #[test]
    fn rediscretize_examples() {
        let sys = benchmarks::double_integrator_raw().unwrap();
        let one = rediscretize(&sys, 1).unwrap();
        assert_eq!(one.lifted(), &sys);

        let two = rediscretize(&sys, 2).unwrap();
        assert_eq!(two.a_bar(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        assert_eq!(two.b_bar(), &DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 1.0, 1.0]));

        let mut unit = sys.clone();
        unit.process_noise = Gaussian::zero_mean(DMatrix::identity(2, 2)).unwrap();
        let two = rediscretize(&unit, 2).unwrap();
        assert_eq!(two.acc_noise().cov(), &DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]));
        assert_eq!(two.control_box_bar().lo, vec![-5.0, -5.0]);

        assert!(rediscretize(&sys, 0).is_err());
    }

    #[test]
    fn merged_step_matches_repeated_base_steps() {
        let mut sys = benchmarks::double_integrator_raw().unwrap();
        sys.process_noise = Gaussian::new(v(&[0.1, -0.2]), diag(&[0.25, 0.25])).unwrap();
        let m = rediscretize(&sys, 3).unwrap();
        let u_bar = v(&[1.0, -2.0, 0.5]);
        let x0 = v(&[0.3, -1.2]);
        let mut x = x0.clone();
        for u in m.split_input(&u_bar) {
            x = sys.step(&x, &u, sys.process_noise.mean()).unwrap();
        }
        let merged = m.lifted().step(&x0, &u_bar, m.acc_noise().mean()).unwrap();
        assert!((x - merged).amax() < 1e-12);
    }

    #[test]
    fn accumulated_noise_is_ordered_by_rate() {
        let sys = benchmarks::motion_2d(1.0).unwrap().system;
        let covs: Vec<_> = (1..=5).map(|d| rediscretize(&sys, d).unwrap().acc_noise().cov().clone()).collect();
        for hi in 0..covs.len() {
            for lo in 0..=hi {
                assert!(linalg::min_eigenvalue(&(&covs[hi] - &covs[lo])) >= -1e-10);
            }
        }
    }

    #[test]
    fn benchmarks_validate() {
        for b in Benchmark::ALL {
            let spec = b.spec(1.0).unwrap();
            spec.validate().unwrap();
            assert_eq!(Benchmark::from_name(b.name()), Some(b));
        }
        let di = benchmarks::double_integrator().unwrap();
        assert_eq!(di.system.meas_noise_cov, diag(&[0.25]));
        assert_eq!(di.system.process_noise.cov(), &DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.5]));
    }

    #[test]
    fn gaussian_rejects_indefinite() {
        assert!(Gaussian::zero_mean(diag(&[1.0, -0.1])).is_err());
        let g = Gaussian::zero_mean(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0])).unwrap();
        assert_eq!(g.cov()[(0, 1)], g.cov()[(1, 0)]);
    }
}
