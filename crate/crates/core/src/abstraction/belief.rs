//! Particle beliefs and their collision-free evolution over one segment.

use nalgebra::SVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plant::{psd_sqrt, ClosedLoop, ControlLaw, Dynamics, GaussianBelief, LoopState, SegmentMode, SensorMode};
use crate::rng;
use crate::scenario::{CostVec, ResourceConfig};

const KEY_SNAP: u64 = 0x534e_4150;
const KEY_RESAMPLE: u64 = 0x5253_4d50;
const MAX_REJECTIONS: usize = 10_000;

/// Weighted joint samples of true state and on-board estimate, conditioned
/// on no collision so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief<const N: usize> {
    pub particles: Vec<LoopState<N>>,
    pub weights: Vec<f64>,
    /// Probability mass kept by the last truncation.
    pub survival_mass: f64,
}

impl<const N: usize> ParticleBelief<N> {
    pub fn uniform(particles: Vec<LoopState<N>>) -> Self {
        let n = particles.len();
        Self { particles, weights: vec![1.0 / n as f64; n], survival_mass: 1.0 }
    }

    pub fn empty() -> Self {
        Self { particles: Vec::new(), weights: Vec::new(), survival_mass: 0.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.weights.iter().map(|w| w * w).sum();
        if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    }

    /// Weighted fraction of particles whose true position satisfies `pred`.
    pub fn mass_where(&self, pred: impl Fn(&SVector<f64, N>) -> bool) -> f64 {
        self.particles.iter().zip(&self.weights).filter(|(p, _)| pred(&p.truth)).map(|(_, w)| w).sum()
    }
}

/// Result of propagating a belief through one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome<const N: usize> {
    pub next_belief: ParticleBelief<N>,
    pub p_collide: f64,
    /// Expected `[energy, energy_loc, duration]` over the segment.
    pub cost: CostVec,
    /// Expected wall-clock duration, s.
    pub duration: f64,
}

/// Propagates particle beliefs of one scenario. Every particle of every
/// segment draws from its own random stream, so results do not depend on
/// thread count.
pub struct Propagator<'a, const N: usize, D> {
    pub closed_loop: &'a ClosedLoop<N, D>,
    pub resources: &'a ResourceConfig,
    pub particles: usize,
    pub seed: u64,
}

impl<const N: usize, D: Dynamics<N>> Propagator<'_, N, D> {
    /// Stabilized belief `b̃ᵢ` of law `i`: estimate at the rest state with the
    /// steady covariance, truth drawn from that Gaussian restricted to free
    /// space. Law 0 starts from the exactly known initial state.
    pub fn steady_belief(&self, law: &ControlLaw<N>) -> Result<ParticleBelief<N>> {
        let est = GaussianBelief::new(law.rest_state, law.steady_cov);
        if law.index == 0 {
            let p = LoopState { truth: law.rest_state, belief: est, meas_clock: 0.0, last_mode: SensorMode::Localization };
            return Ok(ParticleBelief::uniform(vec![p; self.particles]));
        }
        let sqrt = psd_sqrt(&law.steady_cov)?;
        let seed = rng::derive_seed(self.seed, &[KEY_SNAP, law.index as u64]);
        let cl = self.closed_loop;
        let particles = (0..self.particles)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, &[k as u64]);
                for _ in 0..MAX_REJECTIONS {
                    let xi = SVector::<f64, N>::from_fn(|_, _| r.sample(StandardNormal));
                    let truth = law.rest_state + sqrt * xi;
                    if !cl.in_collision(&truth) {
                        return Ok(LoopState { truth, belief: est, meas_clock: 0.0, last_mode: SensorMode::Localization });
                    }
                }
                Err(Error::Numerical(format!("stabilized belief at waypoint {} lies inside obstacles", law.index)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParticleBelief::uniform(particles))
    }

    /// Runs every particle through the segment driven by `law`. Collided
    /// particles are dropped; survivors are renormalized, or replaced by the
    /// stabilized belief when the segment ends with localization on.
    pub fn propagate(
        &self,
        belief: &ParticleBelief<N>,
        law: &ControlLaw<N>,
        mode: SegmentMode,
        key: &[u64],
    ) -> Result<SegmentOutcome<N>> {
        if belief.is_empty() {
            return Ok(SegmentOutcome {
                next_belief: ParticleBelief::empty(),
                p_collide: 1.0,
                cost: [0.0; 3],
                duration: 0.0,
            });
        }
        let seed = rng::derive_seed(self.seed, key);
        let cl = self.closed_loop;
        let runs = belief
            .particles
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let mut r = rng::stream(seed, &[k as u64]);
                let mut st = *p;
                let run = cl.run_segment(&mut st, law, mode, Some(&mut r), &mut |_| {})?;
                Ok((st, run))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut p_collide = 0.0;
        let mut cost = [0.0; 3];
        let mut duration = 0.0;
        let mut survivors = Vec::with_capacity(runs.len());
        let mut weights = Vec::with_capacity(runs.len());
        for ((st, run), &w) in runs.into_iter().zip(&belief.weights) {
            let c = self.resources.segment_cost(run.time_off, run.time_boot, run.time_on);
            for (acc, x) in cost.iter_mut().zip(c) {
                *acc += w * x;
            }
            duration += w * run.elapsed;
            if run.collided {
                p_collide += w;
            } else {
                survivors.push(st);
                weights.push(w);
            }
        }
        let p_collide = p_collide.clamp(0.0, 1.0);
        let survival = weights.iter().sum::<f64>();
        let next_belief = if survivors.is_empty() {
            ParticleBelief::empty()
        } else if matches!(mode, SegmentMode::On | SegmentMode::BootingTail { .. }) {
            let mut b = self.steady_belief(law)?;
            b.survival_mass = survival;
            b
        } else {
            weights.iter_mut().for_each(|w| *w /= survival);
            let mut b = ParticleBelief { particles: survivors, weights, survival_mass: survival };
            if b.ess() < 0.5 * self.particles as f64 {
                b = self.resample(&b, rng::derive_seed(self.seed, &[KEY_RESAMPLE, seed]));
            }
            b
        };
        Ok(SegmentOutcome { next_belief, p_collide, cost, duration })
    }

    /// Multinomial resampling back to the configured particle count.
    fn resample(&self, b: &ParticleBelief<N>, seed: u64) -> ParticleBelief<N> {
        let mut r = rng::stream(seed, &[]);
        let mut cdf = Vec::with_capacity(b.len());
        let mut acc = 0.0;
        for w in &b.weights {
            acc += w;
            cdf.push(acc);
        }
        let particles = (0..self.particles)
            .map(|_| {
                let u: f64 = r.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c <= u).min(b.len() - 1);
                b.particles[k]
            })
            .collect();
        let mut out = ParticleBelief::uniform(particles);
        out.survival_mass = b.survival_mass;
        out
    }

    /// Expected cost vector of one segment.
    pub fn expected_segment_cost(
        &self,
        belief: &ParticleBelief<N>,
        law: &ControlLaw<N>,
        mode: SegmentMode,
        key: &[u64],
    ) -> Result<CostVec> {
        Ok(self.propagate(belief, law, mode, key)?.cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, RobotFootprint, Shape, Workspace};
    use crate::plant::{Channel, LinearDrift2D, SensorModel, TriggerEps};
    use nalgebra::{SMatrix, Vector2};

    fn world(obstacles: Vec<Shape>) -> Workspace {
        Workspace { bounds: Aabb::new([-10.0, -10.0], [10.0, 10.0]), obstacles, target: Shape::circle([4.0, 0.0], 0.5) }
    }

    fn closed_loop(obstacles: Vec<Shape>) -> ClosedLoop<2, LinearDrift2D> {
        let sensors = SensorModel {
            odometry: Channel::isotropic(0.2, 20.0).unwrap(),
            localization: Channel::isotropic(0.03, 20.0).unwrap(),
        };
        ClosedLoop::new(
            LinearDrift2D::default(),
            sensors,
            SMatrix::identity() * 1e-3,
            world(obstacles),
            RobotFootprint::Point,
            0.05,
            60.0,
            0.3,
        )
        .unwrap()
    }

    fn resources() -> ResourceConfig {
        ResourceConfig { p_on: 8.0, p_base: 42.0, t_boot: 5.0, e_boot: 40.0 }
    }

    fn law(duration: f64) -> ControlLaw<2> {
        ControlLaw {
            index: 1,
            waypoint: Vector2::new(4.0, 0.0),
            rest_state: SVector::<f64, 2>::new(4.0, 0.0),
            steady_cov: SMatrix::identity() * 1e-3,
            nominal_duration: duration,
            eps: TriggerEps { mean: 0.05, var: 0.01 },
        }
    }

    fn start(n: usize) -> ParticleBelief<2> {
        let est = GaussianBelief::new(SVector::zeros(), SMatrix::identity() * 1e-3);
        ParticleBelief::uniform(vec![LoopState::new(SVector::zeros(), est); n])
    }

    #[test]
    fn open_world_never_collides() {
        let cl = closed_loop(vec![]);
        let res = resources();
        let prop = Propagator { closed_loop: &cl, resources: &res, particles: 200, seed: 1 };
        for mode in [SegmentMode::Off, SegmentMode::On, SegmentMode::BootingTail { remaining: 0.5 }] {
            let out = prop.propagate(&start(200), &law(1.0), mode, &[1]).unwrap();
            assert_eq!(out.p_collide, 0.0);
            assert!((out.next_belief.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn belief_inside_obstacle_collides_surely() {
        let cl = closed_loop(vec![Shape::rect([-1.0, -1.0], [1.0, 1.0])]);
        let res = resources();
        let prop = Propagator { closed_loop: &cl, resources: &res, particles: 50, seed: 1 };
        let out = prop.propagate(&start(50), &law(1.0), SegmentMode::Off, &[1]).unwrap();
        assert_eq!(out.p_collide, 1.0);
        assert!(out.next_belief.is_empty());
        let again = prop.propagate(&out.next_belief, &law(1.0), SegmentMode::Off, &[2]).unwrap();
        assert_eq!(again.p_collide, 1.0);
    }

    #[test]
    fn off_and_on_energy_rates() {
        let cl = closed_loop(vec![]);
        let res = resources();
        let prop = Propagator { closed_loop: &cl, resources: &res, particles: 10, seed: 3 };
        let c = prop.expected_segment_cost(&start(10), &law(1.0), SegmentMode::Off, &[0]).unwrap();
        assert!((c[0] - 42.0).abs() < 1e-9 && c[1] == 0.0 && (c[2] - 1.0).abs() < 1e-9);
        assert!((res.segment_cost(0.0, 0.0, 1.0)[0] - 50.0).abs() < 1e-12);
        assert!((res.rates(crate::plant::LocStatus::Booting)[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_is_reproducible() {
        let cl = closed_loop(vec![Shape::rect([1.5, 0.1], [2.5, 3.0])]);
        let res = resources();
        let prop = Propagator { closed_loop: &cl, resources: &res, particles: 300, seed: 9 };
        let a = prop.propagate(&start(300), &law(3.0), SegmentMode::Off, &[4, 2]).unwrap();
        let b = prop.propagate(&start(300), &law(3.0), SegmentMode::Off, &[4, 2]).unwrap();
        assert_eq!(a, b);
        assert!((a.next_belief.survival_mass - (1.0 - a.p_collide)).abs() < 1e-12);
    }

    #[test]
    fn steady_belief_avoids_obstacles() {
        let cl = closed_loop(vec![Shape::rect([4.0, -1.0], [5.0, 1.0])]);
        let res = resources();
        let prop = Propagator { closed_loop: &cl, resources: &res, particles: 500, seed: 2 };
        let mut l = law(1.0);
        l.steady_cov = SMatrix::identity() * 0.01;
        let b = prop.steady_belief(&l).unwrap();
        assert_eq!(b.len(), 500);
        assert!(b.particles.iter().all(|p| !cl.in_collision(&p.truth)));
    }
}
