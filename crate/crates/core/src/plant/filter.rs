//! Extended Kalman filter on the identity observation map and the
//! steady-state (algebraic Riccati) covariance it converges to.

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::model::{ControlInput, Dynamics};
use crate::error::{Error, Result};

/// Smallest eigenvalue accepted as numerically PSD.
pub const PSD_TOLERANCE: f64 = -1e-9;

/// Gaussian state estimate `N(mean, cov)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief<const N: usize> {
    pub mean: SVector<f64, N>,
    pub cov: SMatrix<f64, N, N>,
}

impl<const N: usize> GaussianBelief<N> {
    pub fn new(mean: SVector<f64, N>, cov: SMatrix<f64, N, N>) -> Self {
        Self { mean, cov }
    }

    /// Propagates through `N(mean, cov)` without numerical checks.
    #[inline]
    pub(crate) fn predict_in_place<D: Dynamics<N>>(
        &mut self,
        dynamics: &D,
        u: &ControlInput,
        process_cov_dt: &SMatrix<f64, N, N>,
        dt: f64,
    ) {
        let f = SMatrix::<f64, N, N>::identity() + dynamics.jacobian(&self.mean, u) * dt;
        self.mean += dynamics.deriv(&self.mean, u) * dt;
        dynamics.constrain(&mut self.mean);
        self.cov = f * self.cov * f.transpose() + process_cov_dt;
    }

    /// Joseph-form update with `z = x + v`, `v ~ N(0, r)`.
    #[inline]
    pub(crate) fn update_in_place<D: Dynamics<N>>(
        &mut self,
        dynamics: &D,
        z: &SVector<f64, N>,
        r: &SMatrix<f64, N, N>,
    ) -> Result<()> {
        let s = self.cov + r;
        let s_inv = s
            .cholesky()
            .ok_or_else(|| Error::Numerical("innovation covariance is not invertible".into()))?
            .inverse();
        let k = self.cov * s_inv;
        let mut innovation = z - self.mean;
        dynamics.wrap_innovation(&mut innovation);
        self.mean += k * innovation;
        let i_k = SMatrix::<f64, N, N>::identity() - k;
        let cov = i_k * self.cov * i_k.transpose() + k * r * k.transpose();
        self.cov = (cov + cov.transpose()) * 0.5;
        Ok(())
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    SymmetricEigen::new(nalgebra::DMatrix::from_column_slice(N, N, m.as_slice())).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks numerical positive semidefiniteness and returns the symmetrized matrix.
pub fn ensure_psd<const N: usize>(m: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance has non-finite entries".into()));
    }
    let lo = min_eigenvalue(&sym);
    if lo < PSD_TOLERANCE {
        return Err(Error::Numerical(format!("covariance is not PSD (min eigenvalue {lo:e})")));
    }
    Ok(sym)
}

/// EKF time update over one integration step.
pub fn kalman_predict<const N: usize, D: Dynamics<N>>(
    belief: &GaussianBelief<N>,
    control: &ControlInput,
    dynamics: &D,
    process_cov: &SMatrix<f64, N, N>,
    dt: f64,
) -> Result<GaussianBelief<N>> {
    ensure_psd(&belief.cov)?;
    let mut next = *belief;
    next.predict_in_place(dynamics, control, &(process_cov * dt), dt);
    next.cov = ensure_psd(&next.cov)?;
    Ok(next)
}

/// EKF measurement update for the identity observation map.
pub fn kalman_update<const N: usize, D: Dynamics<N>>(
    belief: &GaussianBelief<N>,
    measurement: &SVector<f64, N>,
    noise_cov: &SMatrix<f64, N, N>,
    dynamics: &D,
) -> Result<GaussianBelief<N>> {
    ensure_psd(&belief.cov)?;
    let mut next = *belief;
    next.update_in_place(dynamics, measurement, noise_cov)?;
    next.cov = ensure_psd(&next.cov)?;
    Ok(next)
}

/// Parameters of the Riccati fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 100_000 }
    }
}

/// Posterior fixed point of the discrete Riccati recursion
/// `P ← update(Fᵏ-propagated P)`, with `k = steps_per_update` predict steps
/// (transition `f`, per-step process covariance `q`) between updates with
/// measurement covariance `r`. Iterates until successive posteriors differ
/// by less than the tolerance in max norm.
pub fn riccati_fixed_point<const N: usize>(
    f: &SMatrix<f64, N, N>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, N, N>,
    steps_per_update: usize,
    opts: RiccatiOptions,
) -> Result<SMatrix<f64, N, N>> {
    riccati_fixed_point_cyclic(f, q, r, &[steps_per_update.max(1)], opts)
}

/// Fixed point of one full measurement cycle: `pattern[c]` predict steps
/// precede the `c`-th update. The result is the posterior at the cycle start.
pub fn riccati_fixed_point_cyclic<const N: usize>(
    f: &SMatrix<f64, N, N>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, N, N>,
    pattern: &[usize],
    opts: RiccatiOptions,
) -> Result<SMatrix<f64, N, N>> {
    if pattern.is_empty() || pattern.contains(&0) {
        return Err(Error::InvalidInput("update pattern needs positive step counts".into()));
    }
    let mut p = SMatrix::<f64, N, N>::zeros();
    let ft = f.transpose();
    for _ in 0..opts.max_iterations {
        let mut next = p;
        for &k in pattern {
            for _ in 0..k {
                next = f * next * ft + q;
            }
            next = posterior(&next, r)?;
        }
        let delta = (next - p).amax();
        p = next;
        if delta < opts.tolerance {
            return Ok(p);
        }
    }
    Err(Error::NonStabilizable { iterations: opts.max_iterations })
}

/// Predict-step counts between consecutive updates of a sensor with the
/// given period sampled on a `dt` grid, over one full cycle of the clock.
pub fn update_pattern(period: f64, dt: f64) -> Vec<usize> {
    let mut pattern = Vec::new();
    let mut clock = 0.0;
    let mut steps = 0;
    for _ in 0..100_000 {
        clock += dt;
        steps += 1;
        if clock >= period - 1e-9 {
            clock = (clock - period).max(0.0);
            pattern.push(steps);
            steps = 0;
            if clock < 1e-9 {
                return pattern;
            }
        }
    }
    // Incommensurate rates: use the mean spacing.
    vec![((period / dt).round() as usize).max(1)]
}

fn posterior<const N: usize>(
    prior: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, N, N>> {
    let s = prior + r;
    // Singular S only arises with a zero prior and exact measurements.
    let k = match s.cholesky() {
        Some(c) => prior * c.inverse(),
        None if prior.amax() == 0.0 => return Ok(SMatrix::zeros()),
        None => return Err(Error::Numerical("innovation covariance is not invertible".into())),
    };
    let i_k = SMatrix::<f64, N, N>::identity() - k;
    let p = i_k * prior * i_k.transpose() + k * r * k.transpose();
    Ok((p + p.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::model::{LinearDrift2D, Unicycle};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix1, Vector2};

    /// Scalar random walk used with the conjugate Gaussian identities.
    struct Walk;
    impl Dynamics<1> for Walk {
        fn deriv(&self, _x: &SVector<f64, 1>, _u: &ControlInput) -> SVector<f64, 1> {
            SVector::zeros()
        }
        fn jacobian(&self, _x: &SVector<f64, 1>, _u: &ControlInput) -> SMatrix<f64, 1, 1> {
            SMatrix::zeros()
        }
        fn control(&self, _e: &SVector<f64, 1>, _w: &Vector2<f64>) -> ControlInput {
            Vector2::zeros()
        }
        fn pose(&self, x: &SVector<f64, 1>) -> crate::geometry::Pose {
            crate::geometry::Pose::new(x[0], 0.0, 0.0)
        }
        fn rest_state(&self, w: &Vector2<f64>, _h: f64) -> SVector<f64, 1> {
            SVector::<f64, 1>::new(w.x)
        }
    }

    #[test]
    fn scalar_conjugate_update() {
        let prior = GaussianBelief::new(SVector::<f64, 1>::new(0.0), Matrix1::new(1.0));
        let post =
            kalman_update(&prior, &SVector::<f64, 1>::new(1.0), &Matrix1::new(1.0), &Walk).unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn huge_measurement_noise_means_no_update() {
        let prior = GaussianBelief::new(SVector::<f64, 1>::new(0.3), Matrix1::new(1.0));
        let post =
            kalman_update(&prior, &SVector::<f64, 1>::new(5.0), &Matrix1::new(1e12), &Walk).unwrap();
        assert!((post.mean[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn non_psd_prior_is_rejected() {
        let prior = GaussianBelief::new(SVector::<f64, 1>::new(0.0), Matrix1::new(-1.0));
        assert!(kalman_update(&prior, &SVector::<f64, 1>::new(0.0), &Matrix1::new(1.0), &Walk).is_err());
    }

    #[test]
    fn singular_innovation_is_numerical_error() {
        let prior = GaussianBelief::new(SVector::<f64, 1>::new(0.0), Matrix1::new(0.0));
        let err = kalman_update(&prior, &SVector::<f64, 1>::new(1.0), &Matrix1::new(0.0), &Walk);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn predict_keeps_psd() {
        let law = Unicycle::default();
        let mut b = GaussianBelief::new(
            SVector::<f64, 4>::new(1.0, 1.0, 0.5, 0.3),
            SMatrix::<f64, 4, 4>::identity() * 1e-4,
        );
        let q = SMatrix::<f64, 4, 4>::identity() * 1e-4;
        for _ in 0..500 {
            b = kalman_predict(&b, &Vector2::new(0.1, 0.2), &law, &q, 0.05).unwrap();
        }
        assert!(min_eigenvalue(&b.cov) > PSD_TOLERANCE);
        assert_abs_diff_eq!(b.cov, b.cov.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn scalar_riccati_golden_ratio() {
        // p ← p+q − (p+q)²/(p+q+r) with q = r = 1; fixed point solves p² + p − 1 = 0.
        let one = Matrix1::new(1.0);
        let p = riccati_fixed_point(&one, &one, &one, 1, RiccatiOptions::default()).unwrap();
        let mut oracle = 0.0_f64;
        for _ in 0..1_000_000 {
            oracle = oracle + 1.0 - (oracle + 1.0).powi(2) / (oracle + 2.0);
        }
        assert_abs_diff_eq!(p[(0, 0)], oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(p[(0, 0)], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-8);
    }

    #[test]
    fn riccati_zero_noise_is_zero() {
        let f = SMatrix::<f64, 2, 2>::identity();
        let z = SMatrix::<f64, 2, 2>::zeros();
        let p = riccati_fixed_point(&f, &z, &z, 3, RiccatiOptions::default()).unwrap();
        assert_eq!(p, z);
    }

    #[test]
    fn riccati_reports_non_convergence() {
        let f = Matrix1::new(1.0);
        let opts = RiccatiOptions { tolerance: 0.0, max_iterations: 10 };
        let err = riccati_fixed_point(&f, &f, &f, 1, opts);
        assert!(matches!(err, Err(Error::NonStabilizable { iterations: 10 })));
    }

    #[test]
    fn drift_model_linear_filter_matches_riccati() {
        let law = LinearDrift2D::default();
        let dt = 0.0125;
        let q = SMatrix::<f64, 2, 2>::identity() * (0.07f64.powi(2) * dt);
        let r = SMatrix::<f64, 2, 2>::identity() * 0.03f64.powi(2);
        let f = SMatrix::<f64, 2, 2>::identity() + law.jacobian(&SVector::zeros(), &Vector2::zeros()) * dt;
        let p = riccati_fixed_point(&f, &q, &r, 5, RiccatiOptions::default()).unwrap();
        let mut b = GaussianBelief::new(SVector::<f64, 2>::zeros(), SMatrix::identity());
        for _ in 0..10_000 {
            for _ in 0..5 {
                b.predict_in_place(&law, &Vector2::zeros(), &q, dt);
            }
            b.update_in_place(&law, &SVector::zeros(), &r).unwrap();
        }
        assert!((b.cov - p).amax() < 1e-6);
    }

    #[test]
    fn update_pattern_cycles() {
        assert_eq!(update_pattern(0.05, 0.05), vec![1]);
        assert_eq!(update_pattern(0.0625, 0.0125), vec![5]);
        let p = update_pattern(1.0 / 16.0, 0.05);
        assert_eq!(p.iter().sum::<usize>(), 5);
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn cyclic_fixed_point_matches_irregular_cadence() {
        let law = LinearDrift2D::default();
        let dt = 0.05;
        let q = SMatrix::<f64, 2, 2>::identity() * (0.01f64.powi(2) * dt);
        let r = SMatrix::<f64, 2, 2>::identity() * 0.03f64.powi(2);
        let f = SMatrix::<f64, 2, 2>::identity() + law.jacobian(&SVector::zeros(), &Vector2::zeros()) * dt;
        let pattern = update_pattern(1.0 / 16.0, dt);
        let p = riccati_fixed_point_cyclic(&f, &q, &r, &pattern, RiccatiOptions::default()).unwrap();
        let mut b = GaussianBelief::new(SVector::<f64, 2>::zeros(), SMatrix::identity());
        for _ in 0..2_000 {
            for &k in &pattern {
                for _ in 0..k {
                    b.predict_in_place(&law, &Vector2::zeros(), &q, dt);
                }
                b.update_in_place(&law, &SVector::zeros(), &r).unwrap();
            }
        }
        assert!((b.cov - p).amax() < 1e-6);
    }
}
