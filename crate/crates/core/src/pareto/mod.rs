//! Multi-objective solver: convex Pareto fronts and randomized policy
//! synthesis.

mod front;
mod report;
pub mod simplex;
mod synth;

pub use front::{
    compute_front, policy_from_labels, scalarize_solve, simplex_grid, Facet, FrontOptions, FrontVertex, ParetoFront,
};
pub use report::{
    evaluate_baselines, savings_percent, savings_report, write_front_csv, Baseline, FrontDocument, FrontSavings, SavingsDocument,
    SavingsRow,
};
pub use synth::{nearest_point, synthesize_policy, TargetPoint};
