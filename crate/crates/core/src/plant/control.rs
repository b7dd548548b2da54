//! Per-waypoint control laws and their termination triggers.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::filter::GaussianBelief;

/// Convergence thresholds of the localization-on trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerEps {
    /// Euclidean distance of the estimated position to the waypoint, m.
    pub mean: f64,
    /// Frobenius distance of the covariance to the steady-state covariance.
    pub var: f64,
}

impl Default for TriggerEps {
    fn default() -> Self {
        Self { mean: 0.05, var: 0.01 }
    }
}

/// Localization status relevant to the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerMode {
    On,
    NotOn,
}

/// Control law `i`: drive to waypoint `i`, terminate per trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw<const N: usize> {
    pub index: usize,
    pub waypoint: Vector2<f64>,
    /// Mean of the stabilized belief reached when the trigger fires.
    pub rest_state: SVector<f64, N>,
    /// Steady-state covariance of the stabilized belief.
    pub steady_cov: SMatrix<f64, N, N>,
    /// Reachability time from the previous waypoint, s.
    pub nominal_duration: f64,
    pub eps: TriggerEps,
}

impl<const N: usize> ControlLaw<N> {
    /// Whether the belief has converged to the stabilized waypoint belief.
    #[inline]
    pub fn converged(&self, belief: &GaussianBelief<N>) -> bool {
        let d = Vector2::new(belief.mean[0] - self.waypoint.x, belief.mean[1] - self.waypoint.y);
        d.norm() < self.eps.mean && (belief.cov - self.steady_cov).norm() < self.eps.var
    }

    /// Number of integration steps covering the nominal duration.
    pub fn nominal_steps(&self, dt: f64) -> usize {
        (self.nominal_duration / dt).round() as usize
    }
}

/// Termination rule: belief convergence with localization on, elapsed
/// nominal duration otherwise.
pub fn trigger_fired<const N: usize>(
    belief: &GaussianBelief<N>,
    elapsed: f64,
    law: &ControlLaw<N>,
    mode: TriggerMode,
) -> bool {
    match mode {
        TriggerMode::On => law.converged(belief),
        TriggerMode::NotOn => elapsed >= law.nominal_duration - 1e-9 * law.nominal_duration.max(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> ControlLaw<2> {
        ControlLaw {
            index: 1,
            waypoint: Vector2::new(1.0, 2.0),
            rest_state: SVector::<f64, 2>::new(1.0, 2.0),
            steady_cov: SMatrix::identity() * 1e-3,
            nominal_duration: 2.0,
            eps: TriggerEps::default(),
        }
    }

    #[test]
    fn fires_at_stabilized_belief() {
        let l = law();
        let b = GaussianBelief::new(l.rest_state, l.steady_cov);
        assert!(trigger_fired(&b, 0.0, &l, TriggerMode::On));
    }

    #[test]
    fn time_trigger_fires_at_duration() {
        let l = law();
        let b = GaussianBelief::new(SVector::zeros(), SMatrix::identity());
        let dt = 0.05;
        assert!(!trigger_fired(&b, 2.0 - dt, &l, TriggerMode::NotOn));
        assert!(trigger_fired(&b, 2.0, &l, TriggerMode::NotOn));
    }

    #[test]
    fn unconverged_covariance_blocks_trigger() {
        let l = law();
        let b = GaussianBelief::new(l.rest_state, l.steady_cov + SMatrix::identity() * 0.01);
        assert!(!trigger_fired(&b, 100.0, &l, TriggerMode::On));
        let far = GaussianBelief::new(SVector::<f64, 2>::new(1.0, 2.1), l.steady_cov);
        assert!(!trigger_fired(&far, 100.0, &l, TriggerMode::On));
    }
}
