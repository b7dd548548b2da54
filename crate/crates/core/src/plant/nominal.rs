//! Noise-free nominal execution of a waypoint sequence: per-waypoint steady
//! covariances, reachability durations and stabilized states.

use nalgebra::{SMatrix, SVector, Vector2};
use rand_chacha::ChaCha8Rng;

use super::closed_loop::{ClosedLoop, LoopState, SegmentMode};
use super::control::{ControlLaw, TriggerEps};
use super::filter::{riccati_fixed_point_cyclic, update_pattern, GaussianBelief, RiccatiOptions};
use super::model::Dynamics;
use crate::error::{Error, Result};

/// Control laws of a mission plus the initial belief.
#[derive(Debug, Clone)]
pub struct NominalPlan<const N: usize> {
    /// Law `i` drives to waypoint `i`; law 0 stabilizes at the start.
    pub laws: Vec<ControlLaw<N>>,
    pub initial: LoopState<N>,
}

impl<const N: usize> NominalPlan<N> {
    pub fn durations(&self) -> Vec<f64> {
        self.laws[1..].iter().map(|l| l.nominal_duration).collect()
    }
}

/// Nominal heading of each waypoint: direction of the incoming segment,
/// inherited from the previous waypoint when the segment is degenerate.
pub fn waypoint_headings(start: &Vector2<f64>, start_heading: f64, waypoints: &[Vector2<f64>]) -> Vec<f64> {
    let mut headings = Vec::with_capacity(waypoints.len() + 1);
    headings.push(start_heading);
    let mut prev = *start;
    let mut h = start_heading;
    for w in waypoints {
        let d = w - prev;
        if d.norm() > 1e-9 {
            h = d.y.atan2(d.x);
        }
        headings.push(h);
        prev = *w;
    }
    headings
}

/// Steady-state covariance of the localization-on filter stabilized at `rest`.
pub fn steady_state_covariance<const N: usize, D: Dynamics<N>>(
    cl: &ClosedLoop<N, D>,
    rest: &SVector<f64, N>,
    opts: &RiccatiOptions,
) -> Result<SMatrix<f64, N, N>> {
    let u = nalgebra::Vector2::zeros();
    let f = SMatrix::<f64, N, N>::identity() + cl.dynamics.jacobian(rest, &u) * cl.dt;
    let pattern = update_pattern(cl.sensors.localization.period(), cl.dt);
    riccati_fixed_point_cyclic(&f, cl.process_cov_dt(), &cl.sensors.localization.cov, &pattern, *opts)
}

/// Builds the control laws by a noise-free localization-on rollout. The
/// nominal duration of segment `i` is the first time the estimate enters the
/// reach radius of waypoint `i`; the rollout then continues until the
/// trigger fires and the next segment starts from the stabilized state.
pub fn compute_nominal_plan<const N: usize, D: Dynamics<N>>(
    cl: &ClosedLoop<N, D>,
    initial_state: &SVector<f64, N>,
    start_heading: f64,
    waypoints: &[Vector2<f64>],
    eps: TriggerEps,
    opts: &RiccatiOptions,
) -> Result<NominalPlan<N>> {
    if waypoints.is_empty() {
        return Err(Error::InvalidInput("waypoint sequence is empty".into()));
    }
    let start = Vector2::new(initial_state[0], initial_state[1]);
    let headings = waypoint_headings(&start, start_heading, waypoints);

    let q0 = steady_state_covariance(cl, initial_state, opts)?;
    let initial = LoopState::new(*initial_state, GaussianBelief::new(*initial_state, q0));
    let mut laws = vec![ControlLaw {
        index: 0,
        waypoint: start,
        rest_state: *initial_state,
        steady_cov: q0,
        nominal_duration: 0.0,
        eps,
    }];

    let mut state = initial;
    for (k, w) in waypoints.iter().enumerate() {
        let i = k + 1;
        let rest = cl.dynamics.rest_state(w, headings[i]);
        let steady_cov = steady_state_covariance(cl, &rest, opts)?;
        let mut law = ControlLaw { index: i, waypoint: *w, rest_state: rest, steady_cov, nominal_duration: 0.0, eps };
        let run = cl
            .run_segment::<ChaCha8Rng>(&mut state, &law, SegmentMode::On, None, &mut |_| {})
            .map_err(|e| match e {
                Error::AbstractionTimeout { t_max, .. } => Error::UnreachableWaypoint { index: i, t_max },
                other => other,
            })?;
        if run.collided {
            return Err(Error::InvalidInput(format!("nominal path collides on segment {i}")));
        }
        law.nominal_duration = run.reached_at.unwrap_or(run.elapsed).min(run.elapsed);
        law.rest_state = state.belief.mean;
        laws.push(law);
    }
    Ok(NominalPlan { laws, initial })
}
