//! Closed-loop execution of one control law: truth integration, EKF,
//! sensor cadence, collision and trigger checks.

use nalgebra::{SMatrix, SVector, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::control::{trigger_fired, ControlLaw, TriggerMode};
use super::filter::GaussianBelief;
use super::model::{euler_step, ControlInput, Dynamics};
use super::sensor::{psd_sqrt, SensorMode, SensorModel};
use crate::error::{Error, Result};
use crate::geometry::{RobotFootprint, Workspace};

/// Power status of the localization system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocStatus {
    Off,
    Booting,
    On,
}

/// How a segment is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentMode {
    /// Localization on, terminate on belief convergence.
    On,
    /// Odometry only for the nominal duration.
    Off,
    /// Odometry only while the localization system boots, nominal duration.
    Booting,
    /// Boot finishes `remaining` seconds into the segment, then localization
    /// is on and the segment terminates on belief convergence.
    BootingTail { remaining: f64 },
}

/// Truth, belief and sensor clock carried between segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopState<const N: usize> {
    pub truth: SVector<f64, N>,
    pub belief: GaussianBelief<N>,
    /// Time since the last measurement.
    pub meas_clock: f64,
    pub last_mode: SensorMode,
}

impl<const N: usize> LoopState<N> {
    pub fn new(truth: SVector<f64, N>, belief: GaussianBelief<N>) -> Self {
        Self { truth, belief, meas_clock: 0.0, last_mode: SensorMode::Localization }
    }
}

/// Outcome of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentRun {
    pub collided: bool,
    pub steps: usize,
    pub elapsed: f64,
    pub time_off: f64,
    pub time_boot: f64,
    pub time_on: f64,
    /// First time the estimated position came within the reach radius.
    pub reached_at: Option<f64>,
}

/// One integration step as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct StepSample<const N: usize> {
    pub elapsed: f64,
    pub truth: SVector<f64, N>,
    pub belief: GaussianBelief<N>,
    pub control: ControlInput,
    pub status: LocStatus,
    pub measured: Option<SensorMode>,
}

/// Plant, sensors and workspace of one mission.
#[derive(Debug, Clone)]
pub struct ClosedLoop<const N: usize, D> {
    pub dynamics: D,
    pub sensors: SensorModel<N>,
    pub process_cov: SMatrix<f64, N, N>,
    pub workspace: Workspace,
    pub footprint: RobotFootprint,
    pub dt: f64,
    /// Upper bound on the duration of a convergence-terminated segment.
    pub t_max: f64,
    pub reach_radius: f64,
    process_cov_dt: SMatrix<f64, N, N>,
    process_sqrt_dt: SMatrix<f64, N, N>,
}

impl<const N: usize, D: Dynamics<N>> ClosedLoop<N, D> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dynamics: D,
        sensors: SensorModel<N>,
        process_cov: SMatrix<f64, N, N>,
        workspace: Workspace,
        footprint: RobotFootprint,
        dt: f64,
        t_max: f64,
        reach_radius: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if !(t_max > dt) {
            return Err(Error::InvalidInput("t_max must exceed dt".into()));
        }
        let process_cov_dt = process_cov * dt;
        let process_sqrt_dt = psd_sqrt(&process_cov_dt)?;
        Ok(Self {
            dynamics,
            sensors,
            process_cov,
            workspace,
            footprint,
            dt,
            t_max,
            reach_radius,
            process_cov_dt,
            process_sqrt_dt,
        })
    }

    pub fn process_cov_dt(&self) -> &SMatrix<f64, N, N> {
        &self.process_cov_dt
    }

    pub fn in_collision(&self, x: &SVector<f64, N>) -> bool {
        self.workspace.in_collision(&self.dynamics.pose(x), &self.footprint)
    }

    /// Runs one segment. `rng = None` gives the noise-free rollout.
    pub fn run_segment<R: Rng + ?Sized>(
        &self,
        state: &mut LoopState<N>,
        law: &ControlLaw<N>,
        mode: SegmentMode,
        mut rng: Option<&mut R>,
        observer: &mut dyn FnMut(&StepSample<N>),
    ) -> Result<SegmentRun> {
        let dt = self.dt;
        let fixed_steps = match mode {
            SegmentMode::Off | SegmentMode::Booting => Some(law.nominal_steps(dt)),
            _ => None,
        };
        let switch_step = match mode {
            SegmentMode::BootingTail { remaining } => ((remaining / dt) - 1e-9).ceil().max(0.0) as usize,
            SegmentMode::On => 0,
            _ => usize::MAX,
        };
        let mut run = SegmentRun::default();
        if fixed_steps == Some(0) {
            return Ok(run);
        }
        let max_steps = (self.t_max / dt).ceil() as usize;
        let reach2 = self.reach_radius * self.reach_radius;
        loop {
            let status = match mode {
                SegmentMode::Off => LocStatus::Off,
                SegmentMode::Booting => LocStatus::Booting,
                SegmentMode::On => LocStatus::On,
                SegmentMode::BootingTail { .. } if run.steps < switch_step => LocStatus::Booting,
                SegmentMode::BootingTail { .. } => LocStatus::On,
            };
            let sensor = if status == LocStatus::On { SensorMode::Localization } else { SensorMode::Odometry };

            let u = self.dynamics.control(&state.belief.mean, &law.waypoint);
            let noise = match rng.as_deref_mut() {
                Some(r) => self.process_sqrt_dt * standard_normal::<N, R>(r),
                None => SVector::zeros(),
            };
            state.truth = euler_step(&self.dynamics, &state.truth, &u, &noise, dt);
            state.belief.predict_in_place(&self.dynamics, &u, &self.process_cov_dt, dt);
            run.steps += 1;
            run.elapsed = run.steps as f64 * dt;
            match status {
                LocStatus::Off => run.time_off += dt,
                LocStatus::Booting => run.time_boot += dt,
                LocStatus::On => run.time_on += dt,
            }

            if self.in_collision(&state.truth) {
                run.collided = true;
                observer(&StepSample {
                    elapsed: run.elapsed,
                    truth: state.truth,
                    belief: state.belief,
                    control: u,
                    status,
                    measured: None,
                });
                return Ok(run);
            }

            let channel = self.sensors.channel(sensor);
            state.meas_clock += dt;
            if sensor != state.last_mode {
                state.meas_clock = f64::INFINITY;
                state.last_mode = sensor;
            }
            let mut measured = None;
            if state.meas_clock >= channel.period() - 1e-9 {
                state.meas_clock = if state.meas_clock.is_finite() {
                    (state.meas_clock - channel.period()).max(0.0)
                } else {
                    0.0
                };
                let xi = match rng.as_deref_mut() {
                    Some(r) => channel.sqrt_cov * standard_normal::<N, R>(r),
                    None => SVector::zeros(),
                };
                let z = state.truth + xi;
                state.belief.update_in_place(&self.dynamics, &z, &channel.cov)?;
                measured = Some(sensor);
            }
            observer(&StepSample {
                elapsed: run.elapsed,
                truth: state.truth,
                belief: state.belief,
                control: u,
                status,
                measured,
            });

            if run.reached_at.is_none() {
                let d = Vector2::new(state.belief.mean[0] - law.waypoint.x, state.belief.mean[1] - law.waypoint.y);
                if d.norm_squared() <= reach2 {
                    run.reached_at = Some(run.elapsed);
                }
            }
            match fixed_steps {
                Some(n) if run.steps >= n => return Ok(run),
                Some(_) => {}
                None => {
                    if status == LocStatus::On && trigger_fired(&state.belief, run.elapsed, law, TriggerMode::On) {
                        return Ok(run);
                    }
                    if run.steps >= max_steps {
                        return Err(Error::AbstractionTimeout { segment: law.index, t_max: self.t_max });
                    }
                }
            }
        }
    }
}

#[inline]
fn standard_normal<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> SVector<f64, N> {
    SVector::from_fn(|_, _| rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Shape};
    use crate::plant::control::TriggerEps;
    use crate::plant::model::LinearDrift2D;
    use crate::plant::sensor::Channel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_world() -> Workspace {
        Workspace {
            bounds: Aabb::new([-10.0, -10.0], [10.0, 10.0]),
            obstacles: vec![],
            target: Shape::circle([5.0, 0.0], 1.0),
        }
    }

    fn drift_loop(world: Workspace) -> ClosedLoop<2, LinearDrift2D> {
        let sensors = SensorModel {
            odometry: Channel::isotropic(0.2, 20.0).unwrap(),
            localization: Channel::isotropic(0.03, 20.0).unwrap(),
        };
        ClosedLoop::new(
            LinearDrift2D::default(),
            sensors,
            SMatrix::identity() * 1e-4,
            world,
            RobotFootprint::Point,
            0.05,
            60.0,
            0.3,
        )
        .unwrap()
    }

    fn law(cl: &ClosedLoop<2, LinearDrift2D>, steady: SMatrix<f64, 2, 2>) -> ControlLaw<2> {
        let _ = cl;
        ControlLaw {
            index: 1,
            waypoint: Vector2::new(5.0, 0.0),
            rest_state: SVector::<f64, 2>::new(5.0, 0.0),
            steady_cov: steady,
            nominal_duration: 2.0,
            eps: TriggerEps::default(),
        }
    }

    #[test]
    fn noise_free_on_segment_converges() {
        let cl = drift_loop(open_world());
        let l = law(&cl, SMatrix::identity() * 1e-5);
        let mut st = LoopState::new(SVector::zeros(), GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-4));
        let run = cl
            .run_segment::<ChaCha8Rng>(&mut st, &l, SegmentMode::On, None, &mut |_| {})
            .unwrap();
        assert!(!run.collided);
        assert!(run.reached_at.unwrap() < run.elapsed);
        assert!((st.truth - st.belief.mean).amax() < 1e-12);
        assert!((st.truth - l.rest_state).norm() < 0.05);
        assert!((run.time_on - run.elapsed).abs() < 1e-9);
    }

    #[test]
    fn off_segment_runs_nominal_steps() {
        let cl = drift_loop(open_world());
        let l = law(&cl, SMatrix::zeros());
        let mut st = LoopState::new(SVector::zeros(), GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n_meas = 0;
        let run = cl
            .run_segment(&mut st, &l, SegmentMode::Off, Some(&mut rng), &mut |s| {
                assert_eq!(s.status, LocStatus::Off);
                n_meas += s.measured.is_some() as usize;
            })
            .unwrap();
        assert_eq!(run.steps, 40);
        assert!((run.time_off - 2.0).abs() < 1e-12);
        assert_eq!(n_meas, 40);
    }

    #[test]
    fn booting_tail_switches_to_localization() {
        let cl = drift_loop(open_world());
        let l = law(&cl, SMatrix::identity() * 1e-5);
        let mut st = LoopState::new(SVector::zeros(), GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-4));
        st.last_mode = SensorMode::Odometry;
        let run = cl
            .run_segment::<ChaCha8Rng>(&mut st, &l, SegmentMode::BootingTail { remaining: 0.5 }, None, &mut |_| {})
            .unwrap();
        assert!((run.time_boot - 0.5).abs() < 1e-12);
        assert!((run.time_on + run.time_boot - run.elapsed).abs() < 1e-12);
    }

    #[test]
    fn wall_collision_stops_segment() {
        let mut world = open_world();
        world.obstacles.push(Shape::rect([2.0, -5.0], [2.5, 5.0]));
        let cl = drift_loop(world);
        let l = law(&cl, SMatrix::identity() * 1e-5);
        let mut st = LoopState::new(SVector::zeros(), GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-4));
        let run = cl
            .run_segment::<ChaCha8Rng>(&mut st, &l, SegmentMode::On, None, &mut |_| {})
            .unwrap();
        assert!(run.collided);
        assert!(st.truth[0] >= 2.0 && st.truth[0] < 2.5);
    }

    #[test]
    fn unreachable_convergence_times_out() {
        let cl = drift_loop(open_world());
        // Steady covariance that the filter never attains.
        let l = law(&cl, SMatrix::identity());
        let mut st = LoopState::new(SVector::zeros(), GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-4));
        let err = cl
            .run_segment::<ChaCha8Rng>(&mut st, &l, SegmentMode::On, None, &mut |_| {})
            .unwrap_err();
        assert!(matches!(err, Error::AbstractionTimeout { segment: 1, .. }));
    }
}
