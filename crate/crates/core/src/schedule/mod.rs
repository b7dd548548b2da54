//! Localization schedules induced by MDP policies, and the feasibility rules
//! for timed localization traces.

mod trace;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use trace::{check_feasibility, LocAction, TimedAction, TimedActionTrace, Violation};

use crate::abstraction::boot_completion;
use crate::document::{check_version, Provenance, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::mdp::{BeliefMdp, BootInfo, Policy, StateRole, ACTION_OFF, ACTION_ON, ACTION_SBO};

const PROB_TOL: f64 = 1e-12;

/// MDP-level localization decision taken at a waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Off,
    On,
    /// Start, boot, then on.
    Sbo,
}

impl Decision {
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            ACTION_OFF => Some(Decision::Off),
            ACTION_ON => Some(Decision::On),
            ACTION_SBO => Some(Decision::Sbo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choice {
    pub decision: Decision,
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boot: Option<BootInfo>,
}

/// Distribution over decisions at belief node `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub i: usize,
    pub j: usize,
    pub choices: Vec<Choice>,
}

/// Map from belief nodes to distributions over localization decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub waypoints: usize,
    pub t_boot: f64,
    /// Nominal segment durations `Δt₁ … Δt_|φ|`, s.
    pub durations: Vec<f64>,
    /// Sorted by `(i, j)`.
    pub nodes: Vec<NodeEntry>,
}

/// Converts a policy of the belief MDP into the schedule it induces. Boot
/// metadata is recomputed from the nominal durations.
pub fn policy_to_schedule(policy: &Policy, mdp: &BeliefMdp) -> Result<Schedule> {
    policy.validate(mdp)?;
    let durations = mdp.mission.durations.clone();
    let t_boot = mdp.mission.t_boot;
    let mut nodes = Vec::new();
    for s in &mdp.states {
        let StateRole::Node { i, j } = s.role else { continue };
        let mut choices = Vec::new();
        for (a, &p) in s.actions.iter().zip(&policy.dist[s.id]) {
            let Some(decision) = Decision::from_label(&a.label) else { continue };
            if p <= 0.0 {
                continue;
            }
            let boot = match decision {
                Decision::Sbo => {
                    let (m, offset) = boot_completion(&durations, i, t_boot).ok_or_else(|| {
                        Error::InvalidPolicy(format!("node ({i}, {j}) starts a boot that cannot complete"))
                    })?;
                    Some(BootInfo { start: i, completion: m, offset })
                }
                _ => None,
            };
            choices.push(Choice { decision, prob: p, boot });
        }
        if choices.is_empty() {
            continue;
        }
        let total: f64 = choices.iter().map(|c| c.prob).sum();
        for c in &mut choices {
            c.prob /= total;
        }
        nodes.push(NodeEntry { i, j, choices });
    }
    nodes.sort_by_key(|n| (n.i, n.j));
    Ok(Schedule { waypoints: durations.len(), t_boot, durations, nodes })
}

/// Samples the decision at node `(i, j)`.
pub fn schedule_lookup<'a, R: Rng + ?Sized>(schedule: &'a Schedule, node: (usize, usize), rng: &mut R) -> Result<&'a Choice> {
    let entry = schedule.entry(node).ok_or(Error::ScheduleDomain { i: node.0, j: node.1 })?;
    if let [only] = entry.choices.as_slice() {
        return Ok(only);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for c in &entry.choices {
        acc += c.prob;
        if u < acc {
            return Ok(c);
        }
    }
    Ok(entry.choices.last().expect("entries are nonempty"))
}

impl Schedule {
    pub fn entry(&self, node: (usize, usize)) -> Option<&NodeEntry> {
        self.nodes.binary_search_by_key(&node, |n| (n.i, n.j)).ok().map(|k| &self.nodes[k])
    }

    pub fn is_deterministic(&self) -> bool {
        self.nodes.iter().all(|n| n.choices.len() == 1)
    }

    /// Resolves every randomized node once, giving a deterministic schedule.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Schedule {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let mut c = *schedule_lookup(self, (n.i, n.j), rng).expect("node is in the schedule");
                c.prob = 1.0;
                NodeEntry { i: n.i, j: n.j, choices: vec![c] }
            })
            .collect();
        Schedule { nodes, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.durations.len() != self.waypoints {
            return Err(Error::Format("schedule durations do not match the waypoint count".into()));
        }
        for w in self.nodes.windows(2) {
            if (w[0].i, w[0].j) >= (w[1].i, w[1].j) {
                return Err(Error::Format("schedule nodes must be sorted and unique".into()));
            }
        }
        for n in &self.nodes {
            let bad = |msg: &str| Err(Error::Format(format!("node ({}, {}): {msg}", n.i, n.j)));
            if n.j > n.i || n.i >= self.waypoints {
                return bad("outside the node triangle");
            }
            if n.choices.is_empty() {
                return bad("empty distribution");
            }
            if n.choices.iter().any(|c| !(0.0..=1.0 + PROB_TOL).contains(&c.prob)) {
                return bad("probability outside [0, 1]");
            }
            let total: f64 = n.choices.iter().map(|c| c.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad("probabilities do not sum to 1");
            }
            for c in &n.choices {
                let allowed = match c.decision {
                    Decision::On => n.i == n.j,
                    Decision::Sbo => n.i != n.j && c.boot.is_some(),
                    Decision::Off => true,
                };
                if !allowed {
                    return bad("decision not available at this node");
                }
            }
        }
        Ok(())
    }
}

/// Expands the decisions taken along one mission into the timed trace.
/// `times[k]` is `t_k`; decisions are `(waypoint index, choice)` in order.
pub fn expand_trace(decisions: &[(usize, Choice)], times: &[f64], completed: bool) -> TimedActionTrace {
    let mut trace = TimedActionTrace::default();
    for &(i, c) in decisions {
        let Some(&t) = times.get(i) else { break };
        match c.decision {
            Decision::Off => trace.push(t, LocAction::Off),
            Decision::On => trace.push(t, LocAction::On),
            Decision::Sbo => {
                trace.push(t, LocAction::Start);
                let m = c.boot.map_or(i + 1, |b| b.completion);
                for &tk in times.iter().take(m).skip(i + 1) {
                    trace.push(tk, LocAction::Boot);
                }
            }
        }
    }
    if completed {
        trace.end = times.last().copied();
    }
    trace
}

/// Where a schedule came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSource {
    Vertex { index: usize },
    Target { point: String },
    Baseline { name: String },
}

/// Versioned schedule file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDocument {
    pub format_version: u32,
    pub provenance: Provenance,
    pub source: ScheduleSource,
    pub mdp_hash: String,
    pub objectives: Vec<String>,
    /// Guaranteed objective values of the policy behind the schedule.
    pub values: Vec<f64>,
    pub schedule: Schedule,
}

impl ScheduleDocument {
    pub fn new(
        provenance: Provenance,
        source: ScheduleSource,
        mdp_hash: String,
        objectives: Vec<String>,
        values: Vec<f64>,
        schedule: Schedule,
    ) -> Self {
        Self { format_version: FORMAT_VERSION, provenance, source, mdp_hash, objectives, values, schedule }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "schedule file")?;
        self.schedule.validate()
    }
}
