use nalgebra::{DMatrix, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which sensor set produces measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    Odometry,
    Localization,
}

/// One measurement channel `z = x + v`, `v ~ N(0, cov)`, sampled at `rate` Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel<const N: usize> {
    pub cov: SMatrix<f64, N, N>,
    pub sqrt_cov: SMatrix<f64, N, N>,
    pub rate: f64,
}

impl<const N: usize> Channel<N> {
    pub fn new(cov: SMatrix<f64, N, N>, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidInput(format!("sensor rate must be positive, got {rate}")));
        }
        Ok(Self { cov, sqrt_cov: psd_sqrt(&cov)?, rate })
    }

    pub fn isotropic(sigma: f64, rate: f64) -> Result<Self> {
        Self::new(SMatrix::identity() * (sigma * sigma), rate)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Odometry and localization channels of one robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel<const N: usize> {
    pub odometry: Channel<N>,
    pub localization: Channel<N>,
}

impl<const N: usize> SensorModel<N> {
    pub fn channel(&self, mode: SensorMode) -> &Channel<N> {
        match mode {
            SensorMode::Odometry => &self.odometry,
            SensorMode::Localization => &self.localization,
        }
    }
}

/// Measurement of `state` in `mode`; `standard_normal` is a draw from `N(0, I)`.
pub fn measure<const N: usize>(
    state: &SVector<f64, N>,
    mode: SensorMode,
    sensors: &SensorModel<N>,
    standard_normal: &SVector<f64, N>,
) -> SVector<f64, N> {
    state + sensors.channel(mode).sqrt_cov * standard_normal
}

/// Symmetric square root `L` with `L Lᵀ = m` of a PSD matrix.
pub fn psd_sqrt<const N: usize>(m: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidInput("covariance must be symmetric".into()));
    }
    let eig = SymmetricEigen::new(DMatrix::from_column_slice(N, N, m.as_slice()));
    if eig.eigenvalues.iter().any(|&l| l < super::filter::PSD_TOLERANCE) {
        return Err(Error::InvalidInput("covariance must be positive semidefinite".into()));
    }
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let root = &eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose();
    Ok(SMatrix::from_column_slice(root.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample_variance(mode: SensorMode, sigma_od: f64, sigma_lo: f64) -> f64 {
        let sensors = SensorModel::<2> {
            odometry: Channel::isotropic(sigma_od, 20.0).unwrap(),
            localization: Channel::isotropic(sigma_lo, 16.0).unwrap(),
        };
        let x = SVector::<f64, 2>::new(3.0, -1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let xi = SVector::<f64, 2>::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let e = (measure(&x, mode, &sensors, &xi) - x)[0];
            s += e;
            s2 += e * e;
        }
        let mean = s / n as f64;
        s2 / n as f64 - mean * mean
    }

    #[test]
    fn zero_noise_is_identity() {
        let sensors = SensorModel::<2> {
            odometry: Channel::isotropic(0.2, 20.0).unwrap(),
            localization: Channel::isotropic(0.03, 16.0).unwrap(),
        };
        let x = SVector::<f64, 2>::new(1.5, 2.5);
        assert_eq!(measure(&x, SensorMode::Localization, &sensors, &SVector::zeros()), x);
    }

    #[test]
    fn localization_variance() {
        let v = sample_variance(SensorMode::Localization, 0.2, 0.03);
        assert!((v / 0.03f64.powi(2) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn odometry_variance() {
        let v = sample_variance(SensorMode::Odometry, 0.2, 0.03);
        assert!((v / 0.04 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn sqrt_of_singular_psd() {
        let m = SMatrix::<f64, 2, 2>::new(1.0, 1.0, 1.0, 1.0);
        let l = psd_sqrt(&m).unwrap();
        assert!((l * l.transpose() - m).amax() < 1e-12);
        assert!(psd_sqrt(&SMatrix::<f64, 2, 2>::new(1.0, 0.0, 0.0, -1.0)).is_err());
        assert!(Channel::<2>::isotropic(0.1, 0.0).is_err());
    }
}
