//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use locsched::abstraction::{build_mdp, BuildOptions};
use locsched::mdp::BeliefMdp;
use locsched::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../examples/scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("bundled scenario loads")
}

pub fn mdp(name: &str, particles: usize) -> BeliefMdp {
    build_mdp(&scenario(name), &BuildOptions { particles, seed: 0 }).expect("abstraction succeeds")
}
