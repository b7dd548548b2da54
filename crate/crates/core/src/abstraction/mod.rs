//! Belief MDP abstraction: particle propagation per segment and the
//! triangular node construction with composite boot actions.

mod belief;
mod build;

pub use belief::{ParticleBelief, Propagator, SegmentOutcome};
pub use build::{
    baseline_policies, boot_completion, build_mdp, BOOT_TOL, expected_state_count, node_id, BuildOptions, MdpDocument,
};
