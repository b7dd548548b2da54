use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a state in the belief MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRole {
    /// Belief node `sᵢʲ`: at waypoint `i`, last localized at waypoint `j`.
    Node { i: usize, j: usize },
    Collision,
    Target,
    Free,
}

impl StateRole {
    pub fn is_absorbing(self) -> bool {
        !matches!(self, StateRole::Node { .. })
    }
}

pub const ACTION_OFF: &str = "off";
pub const ACTION_ON: &str = "on";
pub const ACTION_SBO: &str = "sbo";
pub const ACTION_FIN: &str = "fin";
pub const ACTION_LOOP: &str = "loop";

/// Timing of a boot sequence started by `a_sbo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootInfo {
    /// Waypoint index at which the boot starts.
    pub start: usize,
    /// Index of the segment during which the boot completes.
    pub completion: usize,
    /// Time into segment `completion` at which localization comes on, s.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub label: String,
    /// Sparse distribution over successor state ids.
    pub transitions: Vec<(usize, f64)>,
    pub cost: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boot: Option<BootInfo>,
}

impl Action {
    pub fn new(label: &str, transitions: Vec<(usize, f64)>, cost: Vec<f64>) -> Self {
        Self { label: label.to_string(), transitions, cost, boot: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub id: usize,
    pub role: StateRole,
    pub actions: Vec<Action>,
}

/// Mission data carried along with the MDP for schedule construction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionInfo {
    /// Nominal durations `Δt₁ … Δt_|φ|`, s.
    pub durations: Vec<f64>,
    pub t_boot: f64,
}

/// Finite MDP with vector-valued costs and three absorbing outcome states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefMdp {
    pub states: Vec<State>,
    pub initial: usize,
    pub cost_names: Vec<String>,
    #[serde(default)]
    pub mission: MissionInfo,
}

impl BeliefMdp {
    pub fn state_action_pairs(&self) -> usize {
        self.states.iter().map(|s| s.actions.len()).sum()
    }

    pub fn find_role(&self, role: StateRole) -> Option<usize> {
        self.states.iter().position(|s| s.role == role)
    }

    pub fn node_ids(&self) -> BTreeMap<(usize, usize), usize> {
        self.states
            .iter()
            .filter_map(|s| match s.role {
                StateRole::Node { i, j } => Some(((i, j), s.id)),
                _ => None,
            })
            .collect()
    }

    pub fn cost_index(&self, name: &str) -> Option<usize> {
        self.cost_names.iter().position(|c| c == name)
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        let n = self.states.len();
        if self.initial >= n {
            return bad(format!("initial state {} out of range", self.initial));
        }
        for (k, s) in self.states.iter().enumerate() {
            if s.id != k {
                return bad(format!("state at position {k} has id {}", s.id));
            }
            if s.actions.is_empty() {
                return bad(format!("state {k} has no actions"));
            }
            let mut labels: Vec<&str> = s.actions.iter().map(|a| a.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != s.actions.len() {
                return bad(format!("state {k} has duplicate action labels"));
            }
            for a in &s.actions {
                if a.cost.len() != self.cost_names.len() {
                    return bad(format!("state {k} action {} has {} cost entries", a.label, a.cost.len()));
                }
                if a.cost.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
                    return bad(format!("state {k} action {} has a negative or non-finite cost", a.label));
                }
                let mut total = 0.0;
                for &(t, p) in &a.transitions {
                    if t >= n {
                        return bad(format!("state {k} action {} targets unknown state {t}", a.label));
                    }
                    if !(0.0..=1.0 + 1e-12).contains(&p) {
                        return bad(format!("state {k} action {} has probability {p}", a.label));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("state {k} action {} row sums to {total}", a.label));
                }
            }
            if s.role.is_absorbing() {
                let ok = s.actions.len() == 1
                    && s.actions[0].transitions.iter().all(|&(t, p)| t == k || p == 0.0)
                    && s.actions[0].cost.iter().all(|&c| c == 0.0);
                if !ok {
                    return bad(format!("absorbing state {k} must have a single zero-cost self-loop"));
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Topological order of all states (absorbing self-loops ignored).
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.states.len();
        let mut indegree = vec![0usize; n];
        let succ: Vec<Vec<usize>> = self
            .states
            .iter()
            .map(|s| {
                let mut out: Vec<usize> = s
                    .actions
                    .iter()
                    .flat_map(|a| a.transitions.iter())
                    .filter(|&&(t, p)| p > 0.0 && !(t == s.id && s.role.is_absorbing()))
                    .map(|&(t, _)| t)
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        for out in &succ {
            for &t in out {
                indegree[t] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&k| indegree[k] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut head = 0;
        while head < queue.len() {
            let k = queue[head];
            head += 1;
            order.push(k);
            for &t in &succ[k] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push(t);
                }
            }
        }
        if order.len() != n {
            return Err(Error::UnsupportedStructure("MDP has a cycle outside the absorbing states".into()));
        }
        Ok(order)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn absorbing(id: usize, role: StateRole, costs: usize) -> State {
        State { id, role, actions: vec![Action::new(ACTION_LOOP, vec![(id, 1.0)], vec![0.0; costs])] }
    }

    /// `s₀`: a₁ → targ w.p. 1 at cost 10; a₂ → targ/coll 0.5/0.5 at cost 2.
    pub fn two_action() -> BeliefMdp {
        BeliefMdp {
            states: vec![
                State {
                    id: 0,
                    role: StateRole::Node { i: 0, j: 0 },
                    actions: vec![
                        Action::new("a1", vec![(2, 1.0)], vec![10.0]),
                        Action::new("a2", vec![(2, 0.5), (1, 0.5)], vec![2.0]),
                    ],
                },
                absorbing(1, StateRole::Collision, 1),
                absorbing(2, StateRole::Target, 1),
                absorbing(3, StateRole::Free, 1),
            ],
            initial: 0,
            cost_names: vec!["energy".into()],
            mission: MissionInfo::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn fixture_is_valid() {
        let m = two_action();
        m.validate().unwrap();
        assert_eq!(m.state_action_pairs(), 5);
        assert_eq!(m.topological_order().unwrap()[0], 0);
    }

    #[test]
    fn detects_bad_rows_and_cycles() {
        let mut m = two_action();
        m.states[0].actions[0].transitions[0].1 = 0.9;
        assert!(m.validate().is_err());

        let mut m = two_action();
        m.states.push(State {
            id: 4,
            role: StateRole::Node { i: 1, j: 0 },
            actions: vec![Action::new("a", vec![(0, 1.0)], vec![0.0])],
        });
        m.states[0].actions[0].transitions = vec![(4, 1.0)];
        assert!(matches!(m.topological_order(), Err(Error::UnsupportedStructure(_))));
    }

    #[test]
    fn negative_cost_is_rejected() {
        let mut m = two_action();
        m.states[0].actions[1].cost[0] = -1.0;
        assert!(m.validate().is_err());
    }
}
