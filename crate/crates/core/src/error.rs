use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("Riccati recursion did not converge within {iterations} iterations")]
    NonStabilizable { iterations: usize },

    #[error("waypoint {index} not reached within {t_max} s")]
    UnreachableWaypoint { index: usize, t_max: f64 },

    #[error("segment {segment} trigger did not fire within {t_max} s")]
    AbstractionTimeout { segment: usize, t_max: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("unsupported MDP structure: {0}")]
    UnsupportedStructure(String),

    #[error("target point is not achievable; nearest achievable point {nearest:?}")]
    Unachievable { nearest: Vec<f64> },

    #[error("schedule has no entry for node ({i}, {j})")]
    ScheduleDomain { i: usize, j: usize },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
