use thiserror::Error;

/// Errors raised by the problem model and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("user count K={users} exceeds antenna count M={antennas}")]
    TooManyUsers { users: usize, antennas: usize },

    #[error("channel matrix is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("constraint {index}: {reason}")]
    InvalidConstraint { index: usize, reason: String },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("state is not strictly interior: {0}")]
    NotInterior(String),

    #[error("KKT matrix is singular or ill-conditioned (condition estimate {condition:e}); restart with a smaller barrier parameter")]
    IllConditioned { condition: f64 },

    #[error("user {user} has zero usage under every constraint; its power is unbounded")]
    UnboundedPower { user: usize },

    #[error("no constraint with an identity matrix; normalize the constraint set first")]
    MissingSumPower,
}

pub type Result<T> = std::result::Result<T, Error>;
