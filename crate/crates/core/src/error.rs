use thiserror::Error;

/// Errors raised while building a scenario or solving the activation problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("channel matrix is rank deficient ({users} users, condition ratio {ratio:.3e})")]
    SingularChannel { users: usize, ratio: f64 },

    #[error("second-moment estimation needs at least 2 far-field realizations, got {0}")]
    Estimation(usize),

    #[error("assembled constraint {index} is not convex (min eigenvalue {min_eigenvalue:.3e})")]
    Assembly { index: usize, min_eigenvalue: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("convex solver failed: {0}")]
    SolverFailure(String),

    #[error("exhaustive search refused: S = {0} exceeds the limit of {1}")]
    TooLarge(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
