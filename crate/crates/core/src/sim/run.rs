use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::BootInfo;
use crate::plant::{compute_nominal_plan, ClosedLoop, Dynamics, LocStatus, NominalPlan, SegmentMode};
use crate::rng;
use crate::scenario::{PlantVisitor, ResourceConfig, Scenario, COST_NAMES};
use crate::schedule::{expand_trace, schedule_lookup, Choice, Decision, Schedule, TimedActionTrace};

const KEY_NOISE: u64 = 1;
const KEY_SCHEDULE: u64 = 2;
const KEY_PRESAMPLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Collision,
    Target,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub est_x: f64,
    pub est_y: f64,
    /// Trace of the position block of the estimate covariance.
    pub cov_trace: f64,
    pub status: LocStatus,
}

/// One simulated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub outcome: Outcome,
    /// Accumulated costs, ordered as the MDP cost entries.
    pub cost: Vec<f64>,
    /// Waypoints reached, `t₀ … t_k`.
    pub waypoint_times: Vec<f64>,
    pub actions: TimedActionTrace,
    /// Decimated state trace; empty unless requested.
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Resolve randomized schedule nodes once per mission instead of at
    /// every node entry.
    pub presample: bool,
    pub record_trace: bool,
    /// Upper bound on recorded trace points per run.
    pub max_trace_points: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { presample: false, record_trace: false, max_trace_points: 2000 }
    }
}

/// Closed loop and nominal plan of a scenario, ready to run missions.
pub(crate) struct Mission<const N: usize, D> {
    pub cl: ClosedLoop<N, D>,
    pub plan: NominalPlan<N>,
    pub resources: ResourceConfig,
}

impl<const N: usize, D: Dynamics<N>> Mission<N, D> {
    pub fn check_schedule(&self, schedule: &Schedule) -> Result<()> {
        schedule.validate()?;
        let durations = self.plan.durations();
        if durations.len() != schedule.waypoints {
            return Err(Error::InvalidInput(format!(
                "schedule covers {} waypoints but the scenario has {}",
                schedule.waypoints,
                durations.len()
            )));
        }
        if durations.iter().zip(&schedule.durations).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::InvalidInput("schedule was built for different nominal durations".into()));
        }
        Ok(())
    }

    pub fn run(&self, schedule: &Schedule, seed: u64, opts: &SimOptions) -> Result<RunRecord> {
        let realized;
        let schedule = if opts.presample {
            realized = schedule.realize(&mut rng::stream(seed, &[KEY_PRESAMPLE]));
            &realized
        } else {
            schedule
        };
        let mut noise = rng::stream(seed, &[KEY_NOISE]);
        let mut picks = rng::stream(seed, &[KEY_SCHEDULE]);
        let n = self.plan.laws.len() - 1;
        let mut state = self.plan.initial;
        let mut cost = vec![0.0; COST_NAMES.len()];
        let mut times = vec![0.0];
        let mut decisions: Vec<(usize, Choice)> = Vec::new();
        let mut samples: Vec<TracePoint> = Vec::new();
        let mut last_loc = 0;
        let mut boot: Option<BootInfo> = None;
        let mut t = 0.0;
        let mut outcome = None;

        for i in 0..n {
            let mode = match boot {
                Some(b) => booting_mode(b, i),
                None => {
                    let c = *schedule_lookup(schedule, (i, last_loc), &mut picks)?;
                    decisions.push((i, c));
                    match c.decision {
                        Decision::Off => SegmentMode::Off,
                        Decision::On => SegmentMode::On,
                        Decision::Sbo => {
                            let b = c.boot.ok_or_else(|| Error::Format(format!("node ({i}, {last_loc}) lacks boot data")))?;
                            if b.start != i || b.completion <= i || b.completion > n {
                                return Err(Error::Format(format!("node ({i}, {last_loc}) has inconsistent boot data")));
                            }
                            boot = Some(b);
                            booting_mode(b, i)
                        }
                    }
                }
            };
            let law = &self.plan.laws[i + 1];
            let run = {
                let mut observer = |s: &crate::plant::StepSample<N>| {
                    if opts.record_trace {
                        samples.push(trace_point(&self.cl, t + s.elapsed, &s.truth, &s.belief, s.status));
                    }
                };
                self.cl.run_segment(&mut state, law, mode, Some(&mut noise), &mut observer)?
            };
            let c = self.resources.segment_cost(run.time_off, run.time_boot, run.time_on);
            for (acc, x) in cost.iter_mut().zip(c) {
                *acc += x;
            }
            t += run.elapsed;
            if run.collided {
                outcome = Some(Outcome::Collision);
                break;
            }
            times.push(t);
            match mode {
                SegmentMode::On => last_loc = i + 1,
                SegmentMode::BootingTail { .. } => {
                    last_loc = i + 1;
                    boot = None;
                }
                _ => {}
            }
        }
        let outcome = outcome.unwrap_or_else(|| {
            if self.cl.workspace.in_target(&self.cl.dynamics.pose(&state.truth)) {
                Outcome::Target
            } else {
                Outcome::Free
            }
        });
        let completed = outcome != Outcome::Collision;
        Ok(RunRecord {
            outcome,
            cost,
            actions: expand_trace(&decisions, &times, completed),
            waypoint_times: times,
            trace: decimate(samples, opts.max_trace_points),
        })
    }
}

fn booting_mode(b: BootInfo, i: usize) -> SegmentMode {
    if i + 1 == b.completion {
        SegmentMode::BootingTail { remaining: b.offset }
    } else {
        SegmentMode::Booting
    }
}

fn trace_point<const N: usize, D: Dynamics<N>>(
    cl: &ClosedLoop<N, D>,
    t: f64,
    truth: &SVector<f64, N>,
    belief: &crate::plant::GaussianBelief<N>,
    status: LocStatus,
) -> TracePoint {
    let p = cl.dynamics.pose(truth).position;
    let e = cl.dynamics.pose(&belief.mean).position;
    TracePoint {
        t,
        x: p.x,
        y: p.y,
        est_x: e.x,
        est_y: e.y,
        cov_trace: belief.cov[(0, 0)] + belief.cov[(1, 1)],
        status,
    }
}

/// Keeps every k-th point so at most `limit` remain, always including the
/// last one.
fn decimate(points: Vec<TracePoint>, limit: usize) -> Vec<TracePoint> {
    if points.len() <= limit || limit < 2 {
        return points;
    }
    let stride = (points.len() - 1).div_ceil(limit - 1);
    let last = *points.last().expect("nonempty");
    let mut out: Vec<TracePoint> = points.into_iter().step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

pub(crate) trait MissionTask {
    type Output;
    fn run<const N: usize, D: Dynamics<N> + Clone + Sync>(self, mission: &Mission<N, D>) -> Result<Self::Output>;
}

struct Visit<'a, T> {
    scenario: &'a Scenario,
    task: T,
}

impl<T: MissionTask> PlantVisitor for Visit<'_, T> {
    type Output = Result<T::Output>;

    fn visit<const N: usize, D: Dynamics<N> + Clone>(
        self,
        cl: ClosedLoop<N, D>,
        x0: SVector<f64, N>,
        heading: f64,
    ) -> Result<T::Output> {
        let sc = self.scenario;
        let plan =
            compute_nominal_plan(&cl, &x0, heading, &sc.waypoint_vectors(), sc.trigger_eps(), &sc.riccati_options())?;
        let mission = Mission { cl, plan, resources: sc.resources };
        self.task.run(&mission)
    }
}

pub(crate) fn with_mission<T: MissionTask>(scenario: &Scenario, task: T) -> Result<T::Output> {
    scenario.validate()?;
    scenario.with_plant(Visit { scenario, task })?
}

struct Single<'a> {
    schedule: &'a Schedule,
    seed: u64,
    opts: SimOptions,
}

impl MissionTask for Single<'_> {
    type Output = RunRecord;
    fn run<const N: usize, D: Dynamics<N> + Clone + Sync>(self, m: &Mission<N, D>) -> Result<RunRecord> {
        m.check_schedule(self.schedule)?;
        m.run(self.schedule, self.seed, &self.opts)
    }
}

/// Simulates one mission of `scenario` under `schedule`.
pub fn simulate_mission(scenario: &Scenario, schedule: &Schedule, seed: u64, opts: &SimOptions) -> Result<RunRecord> {
    with_mission(scenario, Single { schedule, seed, opts: *opts })
}
