//! Construction of the belief MDP over nodes `sᵢʲ`.

use nalgebra::{SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::belief::{ParticleBelief, Propagator};
use crate::document::{check_version, Provenance, FORMAT_VERSION};
use crate::error::Result;
use crate::mdp::{
    Action, BeliefMdp, BootInfo, MissionInfo, Policy, State, StateRole, ACTION_FIN, ACTION_LOOP, ACTION_OFF,
    ACTION_ON, ACTION_SBO,
};
use crate::plant::{compute_nominal_plan, ClosedLoop, Dynamics, LocStatus, NominalPlan, SegmentMode};
use crate::scenario::{CostVec, PlantVisitor, Scenario, COST_NAMES};

const KEY_OFF: u64 = 1;
const KEY_ON: u64 = 2;
const KEY_SBO: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildOptions {
    pub particles: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { particles: 2000, seed: 0 }
    }
}

/// Id of node `sᵢʲ` in the triangular layout.
pub fn node_id(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// `(|φ|+2)(|φ|+1)/2 + 3`.
pub fn expected_state_count(waypoints: usize) -> usize {
    (waypoints + 2) * (waypoints + 1) / 2 + 3
}

/// Tolerance on boot completion times, s.
pub const BOOT_TOL: f64 = 1e-9;

/// Segment `m` during which a boot started at waypoint `i` completes: the
/// smallest `m` with `t_m − t_i ≥ T_boot`. Also returns the boot time left at
/// `t_{m−1}`. `durations[k]` is `Δt_{k+1}`. `None` when the boot would not
/// finish strictly before the last waypoint.
pub fn boot_completion(durations: &[f64], i: usize, t_boot: f64) -> Option<(usize, f64)> {
    let n = durations.len();
    let mut elapsed = 0.0;
    for m in (i + 1)..=n {
        let next = elapsed + durations[m - 1];
        if next >= t_boot - BOOT_TOL {
            if m == n && next <= t_boot + BOOT_TOL {
                return None;
            }
            return Some((m, t_boot - elapsed));
        }
        elapsed = next;
    }
    None
}

fn two_way(next: usize, coll: usize, p_coll: f64) -> Vec<(usize, f64)> {
    if p_coll <= 0.0 {
        vec![(next, 1.0)]
    } else if p_coll >= 1.0 {
        vec![(coll, 1.0)]
    } else {
        vec![(next, 1.0 - p_coll), (coll, p_coll)]
    }
}

/// Off-mode results along one chain `B_j^j → B_{j+1}^j → …`.
struct ChainStep {
    p_coll: f64,
    cost: CostVec,
    duration: f64,
}

struct Builder<'a> {
    scenario: &'a Scenario,
    opts: BuildOptions,
}

impl PlantVisitor for Builder<'_> {
    type Output = Result<BeliefMdp>;

    fn visit<const N: usize, D: Dynamics<N> + Clone>(
        self,
        cl: ClosedLoop<N, D>,
        x0: SVector<f64, N>,
        heading: f64,
    ) -> Result<BeliefMdp> {
        let sc = self.scenario;
        let plan = compute_nominal_plan(
            &cl,
            &x0,
            heading,
            &sc.waypoint_vectors(),
            sc.trigger_eps(),
            &sc.riccati_options(),
        )?;
        build_from_plan(&cl, &plan, sc, &self.opts)
    }
}

/// Builds the belief MDP of `scenario`.
pub fn build_mdp(scenario: &Scenario, opts: &BuildOptions) -> Result<BeliefMdp> {
    scenario.validate()?;
    if opts.particles == 0 {
        return Err(crate::Error::InvalidInput("particle count must be positive".into()));
    }
    scenario.with_plant(Builder { scenario, opts: *opts })?
}

fn build_from_plan<const N: usize, D: Dynamics<N>>(
    cl: &ClosedLoop<N, D>,
    plan: &NominalPlan<N>,
    sc: &Scenario,
    opts: &BuildOptions,
) -> Result<BeliefMdp> {
    let n = plan.laws.len() - 1;
    let durations = plan.durations();
    let res = &sc.resources;
    let prop = Propagator { closed_loop: cl, resources: res, particles: opts.particles, seed: opts.seed };
    let n_nodes = node_id(n, n) + 1;
    let (coll, targ, free) = (n_nodes, n_nodes + 1, n_nodes + 2);

    let mut actions: Vec<Vec<Action>> = vec![Vec::new(); n_nodes];
    let in_target = |x: &SVector<f64, N>| cl.workspace.in_target(&cl.dynamics.pose(x));

    for j in 0..=n {
        log::debug!("abstraction: chain {j}/{n}");
        let steady = prop.steady_belief(&plan.laws[j])?;
        // Off chain from the stabilized belief at waypoint j.
        let mut chain: Vec<ParticleBelief<N>> = vec![steady];
        let mut steps: Vec<ChainStep> = Vec::new();
        for i in j..n {
            let out = prop.propagate(&chain[i - j], &plan.laws[i + 1], SegmentMode::Off, &[KEY_OFF, i as u64, j as u64])?;
            steps.push(ChainStep { p_coll: out.p_collide, cost: out.cost, duration: out.duration });
            chain.push(out.next_belief);
        }
        for i in j..n {
            let s = &steps[i - j];
            let mut acts = vec![Action::new(ACTION_OFF, two_way(node_id(i + 1, j), coll, s.p_coll), s.cost.to_vec())];
            if i == j {
                let out = prop.propagate(&chain[0], &plan.laws[i + 1], SegmentMode::On, &[KEY_ON, i as u64])?;
                acts.push(Action::new(ACTION_ON, two_way(node_id(i + 1, i + 1), coll, out.p_collide), out.cost.to_vec()));
            } else if let Some((m, remaining)) = boot_completion(&durations, i, res.t_boot) {
                // Boot over segments i+1..m-1 (odometry only), then the tail of segment m.
                let boot_rates = res.rates(LocStatus::Booting);
                let mut survive = 1.0;
                let mut cost = [0.0; 3];
                for k in i..m - 1 {
                    let step = &steps[k - j];
                    for (c, r) in cost.iter_mut().zip(boot_rates) {
                        *c += survive * r * step.duration;
                    }
                    survive *= 1.0 - step.p_coll;
                }
                let tail = prop.propagate(
                    &chain[m - 1 - j],
                    &plan.laws[m],
                    SegmentMode::BootingTail { remaining },
                    &[KEY_SBO, i as u64, j as u64],
                )?;
                for (c, x) in cost.iter_mut().zip(tail.cost) {
                    *c += survive * x;
                }
                survive *= 1.0 - tail.p_collide;
                let mut a = Action::new(ACTION_SBO, two_way(node_id(m, m), coll, 1.0 - survive), cost.to_vec());
                a.boot = Some(BootInfo { start: i, completion: m, offset: remaining });
                acts.push(a);
            }
            actions[node_id(i, j)] = acts;
        }
        // Terminal split at the last waypoint.
        let last = &chain[n - j];
        let p_targ = if last.is_empty() { 0.0 } else { last.mass_where(in_target).clamp(0.0, 1.0) };
        let fin = if p_targ >= 1.0 {
            vec![(targ, 1.0)]
        } else if p_targ <= 0.0 {
            vec![(free, 1.0)]
        } else {
            vec![(targ, p_targ), (free, 1.0 - p_targ)]
        };
        actions[node_id(n, j)] = vec![Action::new(ACTION_FIN, fin, vec![0.0; COST_NAMES.len()])];
    }

    let mut states = Vec::with_capacity(n_nodes + 3);
    for i in 0..=n {
        for j in 0..=i {
            let id = node_id(i, j);
            states.push(State { id, role: StateRole::Node { i, j }, actions: std::mem::take(&mut actions[id]) });
        }
    }
    for (id, role) in [(coll, StateRole::Collision), (targ, StateRole::Target), (free, StateRole::Free)] {
        states.push(State {
            id,
            role,
            actions: vec![Action::new(ACTION_LOOP, vec![(id, 1.0)], vec![0.0; COST_NAMES.len()])],
        });
    }
    let mdp = BeliefMdp {
        states,
        initial: 0,
        cost_names: COST_NAMES.iter().map(|s| s.to_string()).collect(),
        mission: MissionInfo { durations, t_boot: res.t_boot },
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Always-on and always-off reference schedules.
pub fn baseline_policies(mdp: &BeliefMdp) -> Vec<(String, Policy)> {
    let on = Policy::by_label(mdp, |l| l == ACTION_ON || l == ACTION_SBO);
    let off = Policy::by_label(mdp, |l| l == ACTION_OFF);
    vec![("always_on".to_string(), on), ("always_off".to_string(), off)]
}

/// Versioned MDP file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub format_version: u32,
    pub provenance: Provenance,
    pub waypoints: Vec<[f64; 2]>,
    pub mdp: BeliefMdp,
}

impl MdpDocument {
    pub fn new(scenario: &Scenario, opts: &BuildOptions, mdp: BeliefMdp) -> Self {
        let mut provenance = Provenance::new(scenario);
        provenance.seed = Some(opts.seed);
        provenance.particles = Some(opts.particles);
        Self { format_version: FORMAT_VERSION, provenance, waypoints: scenario.waypoints.clone(), mdp }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "MDP file")?;
        self.mdp.validate()
    }

    pub fn waypoint_vectors(&self) -> Vec<Vector2<f64>> {
        self.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect()
    }
}
