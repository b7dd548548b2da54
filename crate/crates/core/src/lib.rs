//! Energy-aware scheduling of localization for mobile robots.

pub mod abstraction;
pub mod document;
pub mod error;
pub mod geometry;
pub mod mdp;
pub mod pareto;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
pub use scenario::Scenario;
