use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{BeliefMdp, StateRole};
use crate::error::{Error, Result};

/// Memoryless randomized policy: one distribution per state, aligned with
/// the state's action list.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub dist: Vec<Vec<f64>>,
}

impl Policy {
    pub fn deterministic(mdp: &BeliefMdp, choice: &[usize]) -> Self {
        let dist = mdp
            .states
            .iter()
            .zip(choice)
            .map(|(s, &c)| {
                let mut d = vec![0.0; s.actions.len()];
                d[c] = 1.0;
                d
            })
            .collect();
        Self { dist }
    }

    /// Chooses the first action whose label satisfies `pick`, else action 0.
    pub fn by_label(mdp: &BeliefMdp, pick: impl Fn(&str) -> bool) -> Self {
        let choice: Vec<usize> =
            mdp.states.iter().map(|s| s.actions.iter().position(|a| pick(&a.label)).unwrap_or(0)).collect();
        Self::deterministic(mdp, &choice)
    }

    pub fn validate(&self, mdp: &BeliefMdp) -> Result<()> {
        if self.dist.len() != mdp.states.len() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, MDP has {}",
                self.dist.len(),
                mdp.states.len()
            )));
        }
        for (s, d) in mdp.states.iter().zip(&self.dist) {
            if d.len() != s.actions.len() {
                return Err(Error::InvalidPolicy(format!("state {} support outside its actions", s.id)));
            }
            if d.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidPolicy(format!("state {} has a negative probability", s.id)));
            }
            let total: f64 = d.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPolicy(format!("state {} distribution sums to {total}", s.id)));
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.dist.iter().all(|d| d.iter().filter(|&&p| p > 0.0).count() == 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_index(&self.dist[state], rng)
    }

    pub fn to_document(&self, mdp: &BeliefMdp) -> PolicyDocument {
        let states = mdp
            .states
            .iter()
            .zip(&self.dist)
            .map(|(s, d)| {
                let entry = s
                    .actions
                    .iter()
                    .zip(d)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| (a.label.clone(), p))
                    .collect();
                (s.id.to_string(), PolicyEntry { role: s.role, actions: entry })
            })
            .collect();
        PolicyDocument { states }
    }

    pub fn from_document(mdp: &BeliefMdp, doc: &PolicyDocument) -> Result<Self> {
        let mut dist: Vec<Vec<f64>> = mdp.states.iter().map(|s| vec![0.0; s.actions.len()]).collect();
        for (key, entry) in &doc.states {
            let id: usize = key.parse().map_err(|_| Error::InvalidPolicy(format!("bad state id {key:?}")))?;
            let s = mdp.states.get(id).ok_or_else(|| Error::InvalidPolicy(format!("unknown state {id}")))?;
            if s.role != entry.role {
                return Err(Error::InvalidPolicy(format!("state {id} role mismatch")));
            }
            for (label, &p) in &entry.actions {
                let k = s
                    .actions
                    .iter()
                    .position(|a| &a.label == label)
                    .ok_or_else(|| Error::InvalidPolicy(format!("state {id} has no action {label:?}")))?;
                dist[id][k] = p;
            }
        }
        let policy = Self { dist };
        policy.validate(mdp)?;
        Ok(policy)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(d: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in d.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Serialized policy: state id → role and action-label distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub states: BTreeMap<String, PolicyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub role: StateRole,
    pub actions: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::model::fixtures::two_action;

    #[test]
    fn document_round_trip() {
        let m = two_action();
        let mut p = Policy::deterministic(&m, &[0, 0, 0, 0]);
        p.dist[0] = vec![0.25, 0.75];
        let doc = p.to_document(&m);
        let text = serde_json::to_string(&doc).unwrap();
        let back: PolicyDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(Policy::from_document(&m, &back).unwrap(), p);
    }

    #[test]
    fn rejects_unknown_label() {
        let m = two_action();
        let mut doc = Policy::deterministic(&m, &[0, 0, 0, 0]).to_document(&m);
        doc.states.get_mut("0").unwrap().actions.insert("a9".into(), 0.0);
        assert!(matches!(Policy::from_document(&m, &doc), Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn validation_checks_sums() {
        let m = two_action();
        let mut p = Policy::deterministic(&m, &[0, 0, 0, 0]);
        p.dist[0] = vec![0.5, 0.4];
        assert!(p.validate(&m).is_err());
        p.dist[0] = vec![0.5, 0.5, 0.0];
        assert!(p.validate(&m).is_err());
    }
}
