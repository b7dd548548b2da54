use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{Action, BeliefMdp, StateRole};
use super::policy::Policy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

/// One objective of Problem 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Probability of ending in the target region (maximized).
    PTarg,
    /// Probability of collision (minimized).
    PColl,
    /// Expected total of cost entry `k` (minimized).
    Cost(usize),
}

impl Objective {
    pub fn sense(self) -> Sense {
        match self {
            Objective::PTarg => Sense::Maximize,
            _ => Sense::Minimize,
        }
    }

    /// `+1` for maximized objectives, `-1` for minimized ones.
    pub fn sign(self) -> f64 {
        match self.sense() {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    pub fn is_probability(self) -> bool {
        !matches!(self, Objective::Cost(_))
    }

    /// Value contributed by ending in an absorbing state.
    #[inline]
    pub fn terminal(self, role: StateRole) -> f64 {
        match (self, role) {
            (Objective::PTarg, StateRole::Target) | (Objective::PColl, StateRole::Collision) => 1.0,
            _ => 0.0,
        }
    }

    /// Value accrued by taking `action`.
    #[inline]
    pub fn reward(self, action: &Action) -> f64 {
        match self {
            Objective::Cost(k) => action.cost[k],
            _ => 0.0,
        }
    }

    pub fn name(self, mdp: &BeliefMdp) -> String {
        match self {
            Objective::PTarg => "ptarg".into(),
            Objective::PColl => "pcoll".into(),
            Objective::Cost(k) => mdp.cost_names.get(k).cloned().unwrap_or_else(|| format!("cost{k}")),
        }
    }
}

/// Ordered objective list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub objectives: Vec<Objective>,
}

impl ObjectiveSpec {
    pub fn new(objectives: Vec<Objective>) -> Self {
        Self { objectives }
    }

    /// Parses names (`ptarg`, `pcoll`, or a cost name of the MDP).
    pub fn parse<S: AsRef<str>>(names: &[S], cost_names: &[String]) -> Result<Self> {
        let objectives = names
            .iter()
            .map(|n| match n.as_ref().trim() {
                "ptarg" => Ok(Objective::PTarg),
                "pcoll" => Ok(Objective::PColl),
                other => cost_names
                    .iter()
                    .position(|c| c == other)
                    .map(Objective::Cost)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown objective {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self { objectives };
        spec.validate(cost_names.len())?;
        Ok(spec)
    }

    pub fn validate(&self, n_costs: usize) -> Result<()> {
        if self.objectives.len() < 2 {
            return Err(Error::InvalidInput("at least two objectives are required".into()));
        }
        for (k, o) in self.objectives.iter().enumerate() {
            if matches!(o, Objective::Cost(c) if *c >= n_costs) {
                return Err(Error::InvalidInput(format!("objective {k} refers to a missing cost entry")));
            }
            if self.objectives[..k].contains(o) {
                return Err(Error::InvalidInput(format!("objective {k} is repeated")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn names(&self, mdp: &BeliefMdp) -> Vec<String> {
        self.objectives.iter().map(|o| o.name(mdp)).collect()
    }

    pub fn signs(&self) -> Vec<f64> {
        self.objectives.iter().map(|o| o.sign()).collect()
    }
}

/// Per-state values of every objective under `policy`, by backward
/// substitution along a topological order.
pub fn state_values(mdp: &BeliefMdp, policy: &Policy, objectives: &[Objective]) -> Result<Vec<Vec<f64>>> {
    policy.validate(mdp)?;
    let order = mdp.topological_order()?;
    let k = objectives.len();
    let mut v = vec![vec![0.0; k]; mdp.states.len()];
    for &s in order.iter().rev() {
        let st = &mdp.states[s];
        if st.role.is_absorbing() {
            for (o, obj) in objectives.iter().enumerate() {
                v[s][o] = obj.terminal(st.role);
            }
            continue;
        }
        let mut acc = vec![0.0; k];
        for (a, &pa) in st.actions.iter().zip(&policy.dist[s]) {
            if pa == 0.0 {
                continue;
            }
            for (o, obj) in objectives.iter().enumerate() {
                let mut q = obj.reward(a);
                for &(t, p) in &a.transitions {
                    q += p * v[t][o];
                }
                acc[o] += pa * q;
            }
        }
        v[s] = acc;
    }
    Ok(v)
}

/// Objective vector of `policy` at the initial state, in natural signs.
pub fn evaluate_policy(mdp: &BeliefMdp, policy: &Policy, spec: &ObjectiveSpec) -> Result<Vec<f64>> {
    spec.validate(mdp.cost_names.len())?;
    let v = state_values(mdp, policy, &spec.objectives)?;
    Ok(v[mdp.initial].clone())
}

/// One sampled path of the induced Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub absorbing: usize,
    pub cost: Vec<f64>,
    /// `(state, action index)` pairs taken before absorption.
    pub path: Vec<(usize, usize)>,
}

pub fn simulate_chain<R: Rng + ?Sized>(mdp: &BeliefMdp, policy: &Policy, rng: &mut R) -> Result<ChainSample> {
    policy.validate(mdp)?;
    let mut s = mdp.initial;
    let mut cost = vec![0.0; mdp.cost_names.len()];
    let mut path = Vec::new();
    while !mdp.states[s].role.is_absorbing() {
        if path.len() > mdp.states.len() {
            return Err(Error::UnsupportedStructure("path longer than the state count".into()));
        }
        let a_idx = policy.sample(s, rng);
        let a = &mdp.states[s].actions[a_idx];
        for (c, x) in cost.iter_mut().zip(&a.cost) {
            *c += x;
        }
        path.push((s, a_idx));
        let probs: Vec<f64> = a.transitions.iter().map(|t| t.1).collect();
        s = a.transitions[super::policy::sample_index(&probs, rng)].0;
    }
    Ok(ChainSample { absorbing: s, cost, path })
}
