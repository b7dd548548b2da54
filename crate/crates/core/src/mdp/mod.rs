//! Finite MDPs with vector costs: model, policies, exact evaluation.

pub mod eval;
pub mod model;
pub mod policy;

pub use eval::{evaluate_policy, simulate_chain, state_values, ChainSample, Objective, ObjectiveSpec, Sense};
pub use model::{
    Action, BeliefMdp, BootInfo, MissionInfo, State, StateRole, ACTION_FIN, ACTION_LOOP, ACTION_OFF, ACTION_ON,
    ACTION_SBO,
};
pub use policy::{Policy, PolicyDocument, PolicyEntry};
