//! Plant dynamics and feedback laws.

use nalgebra::{DVector, Matrix2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Planar control input: (acceleration, turn rate) for the unicycle,
/// (velocity command x, y) for the drift model.
pub type ControlInput = Vector2<f64>;

/// Optional actuator limits. `None` means unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Saturation {
    #[serde(default)]
    pub max_speed: Option<f64>,
    #[serde(default)]
    pub max_turn_rate: Option<f64>,
    #[serde(default)]
    pub max_accel: Option<f64>,
}

fn clamp_opt(v: f64, bound: Option<f64>) -> f64 {
    match bound {
        Some(b) => v.clamp(-b, b),
        None => v,
    }
}

/// Continuous-time plant with additive process noise, `ẋ = f(x, u) + w`,
/// together with the feedback law that drives it towards a planar waypoint.
pub trait Dynamics<const N: usize>: Send + Sync {
    /// Noise-free vector field `f(x, u)`.
    fn deriv(&self, x: &SVector<f64, N>, u: &ControlInput) -> SVector<f64, N>;

    /// `∂f/∂x` at `(x, u)`.
    fn jacobian(&self, x: &SVector<f64, N>, u: &ControlInput) -> SMatrix<f64, N, N>;

    /// Feedback law evaluated on the state estimate.
    fn control(&self, estimate: &SVector<f64, N>, waypoint: &Vector2<f64>) -> ControlInput;

    /// Physical state limits applied after each integration step.
    fn constrain(&self, _x: &mut SVector<f64, N>) {}

    /// Planar pose of the robot centre.
    fn pose(&self, x: &SVector<f64, N>) -> Pose;

    /// Normalizes a measurement residual (angle wrapping).
    fn wrap_innovation(&self, _dz: &mut SVector<f64, N>) {}

    /// Full state of a robot at rest on `waypoint` facing `heading`.
    fn rest_state(&self, waypoint: &Vector2<f64>, heading: f64) -> SVector<f64, N>;
}

/// Second-order unicycle `(x₁, x₂, v, θ)` under dynamic feedback
/// linearization with a linear output-feedback law on the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unicycle {
    /// `(k₁, k₂, k₃, k₄)`.
    pub gains: [f64; 4],
    /// Speed magnitude used in place of `|v̂|` when the estimate is slower.
    pub v_min: f64,
    pub saturation: Saturation,
}

impl Default for Unicycle {
    fn default() -> Self {
        Self { gains: [1.0, 2.236, 1.0, 2.236], v_min: 0.05, saturation: Saturation::default() }
    }
}

impl Unicycle {
    /// The un-saturated DFL law and whether the speed clamp was active.
    pub fn dfl(&self, est: &SVector<f64, 4>, waypoint: &Vector2<f64>) -> (ControlInput, bool) {
        let [k1, k2, k3, k4] = self.gains;
        let (v, th) = (est[2], est[3]);
        let (s, c) = th.sin_cos();
        let ub1 = k1 * (waypoint.x - est[0]) - k2 * v * c;
        let ub2 = k3 * (waypoint.y - est[1]) - k4 * v * s;
        let clamped = v.abs() < self.v_min;
        let v_eff = if clamped { self.v_min.copysign(if v == 0.0 { 1.0 } else { v }) } else { v };
        (Vector2::new(ub1 * c + ub2 * s, (ub2 * c - ub1 * s) / v_eff), clamped)
    }
}

impl Dynamics<4> for Unicycle {
    fn deriv(&self, x: &SVector<f64, 4>, u: &ControlInput) -> SVector<f64, 4> {
        let (s, c) = x[3].sin_cos();
        SVector::<f64, 4>::new(x[2] * c, x[2] * s, u[0], u[1])
    }

    fn jacobian(&self, x: &SVector<f64, 4>, _u: &ControlInput) -> SMatrix<f64, 4, 4> {
        let (s, c) = x[3].sin_cos();
        let v = x[2];
        #[rustfmt::skip]
        let j = SMatrix::<f64, 4, 4>::new(
            0.0, 0.0, c, -v * s,
            0.0, 0.0, s, v * c,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        );
        j
    }

    fn control(&self, estimate: &SVector<f64, 4>, waypoint: &Vector2<f64>) -> ControlInput {
        let (u, clamped) = self.dfl(estimate, waypoint);
        if clamped {
            log::trace!("DFL speed clamp active at v̂ = {}", estimate[2]);
        }
        Vector2::new(
            clamp_opt(u[0], self.saturation.max_accel),
            clamp_opt(u[1], self.saturation.max_turn_rate),
        )
    }

    fn constrain(&self, x: &mut SVector<f64, 4>) {
        x[2] = clamp_opt(x[2], self.saturation.max_speed);
    }

    fn pose(&self, x: &SVector<f64, 4>) -> Pose {
        Pose::new(x[0], x[1], x[3])
    }

    fn wrap_innovation(&self, dz: &mut SVector<f64, 4>) {
        dz[3] = wrap_angle(dz[3]);
    }

    fn rest_state(&self, waypoint: &Vector2<f64>, heading: f64) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(waypoint.x, waypoint.y, 0.0, heading)
    }
}

/// Wraps an angle to `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Planar point robot with linear drift, `ẋ = A x + u + w`, under the
/// proportional law `u = -A x̂ + k (x̃ - x̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDrift2D {
    pub drift: [[f64; 2]; 2],
    pub gain: f64,
    pub saturation: Saturation,
}

impl Default for LinearDrift2D {
    fn default() -> Self {
        Self { drift: [[-0.3, 0.1], [0.1, -0.3]], gain: 1.0, saturation: Saturation::default() }
    }
}

impl LinearDrift2D {
    fn a(&self) -> Matrix2<f64> {
        Matrix2::new(self.drift[0][0], self.drift[0][1], self.drift[1][0], self.drift[1][1])
    }
}

impl Dynamics<2> for LinearDrift2D {
    fn deriv(&self, x: &SVector<f64, 2>, u: &ControlInput) -> SVector<f64, 2> {
        self.a() * x + u
    }

    fn jacobian(&self, _x: &SVector<f64, 2>, _u: &ControlInput) -> SMatrix<f64, 2, 2> {
        self.a()
    }

    fn control(&self, estimate: &SVector<f64, 2>, waypoint: &Vector2<f64>) -> ControlInput {
        let u = -self.a() * estimate + (waypoint - estimate) * self.gain;
        match self.saturation.max_speed {
            Some(vmax) if u.norm() > vmax => u * (vmax / u.norm()),
            _ => u,
        }
    }

    fn pose(&self, x: &SVector<f64, 2>) -> Pose {
        Pose::new(x[0], x[1], 0.0)
    }

    fn rest_state(&self, waypoint: &Vector2<f64>, _heading: f64) -> SVector<f64, 2> {
        *waypoint
    }
}

/// Which plant a scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    #[serde(rename = "unicycle")]
    Unicycle2ndOrder,
    #[serde(rename = "linear_drift")]
    LinearDrift2D,
}

impl PlantKind {
    pub fn state_dim(self) -> usize {
        match self {
            PlantKind::Unicycle2ndOrder => 4,
            PlantKind::LinearDrift2D => 2,
        }
    }
}

/// Dimension-erased plant description used at API boundaries.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Unicycle { law: Unicycle, dt: f64 },
    LinearDrift { law: LinearDrift2D, dt: f64 },
}

impl PlantModel {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantModel::Unicycle { .. } => PlantKind::Unicycle2ndOrder,
            PlantModel::LinearDrift { .. } => PlantKind::LinearDrift2D,
        }
    }

    pub fn dt(&self) -> f64 {
        match *self {
            PlantModel::Unicycle { dt, .. } | PlantModel::LinearDrift { dt, .. } => dt,
        }
    }

    /// One Euler–Maruyama step: `x + f(x, u)·dt + noise`, where `noise` is
    /// the already-scaled increment (a draw from `N(0, Q_w·dt)`).
    pub fn step_dynamics(
        &self,
        state: &DVector<f64>,
        control: &ControlInput,
        noise: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.kind().state_dim();
        if state.len() != n || noise.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected state and noise of length {n}, got {} and {}",
                state.len(),
                noise.len()
            )));
        }
        Ok(match self {
            PlantModel::Unicycle { law, dt } => {
                let x = SVector::<f64, 4>::from_column_slice(state.as_slice());
                let w = SVector::<f64, 4>::from_column_slice(noise.as_slice());
                DVector::from_column_slice(euler_step(law, &x, control, &w, *dt).as_slice())
            }
            PlantModel::LinearDrift { law, dt } => {
                let x = SVector::<f64, 2>::from_column_slice(state.as_slice());
                let w = SVector::<f64, 2>::from_column_slice(noise.as_slice());
                DVector::from_column_slice(euler_step(law, &x, control, &w, *dt).as_slice())
            }
        })
    }
}

/// Euler–Maruyama step on a concrete plant.
#[inline]
pub fn euler_step<const N: usize, D: Dynamics<N>>(
    dynamics: &D,
    x: &SVector<f64, N>,
    u: &ControlInput,
    noise: &SVector<f64, N>,
    dt: f64,
) -> SVector<f64, N> {
    let mut next = x + dynamics.deriv(x, u) * dt + noise;
    dynamics.constrain(&mut next);
    next
}
