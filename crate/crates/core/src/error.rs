use thiserror::Error;

/// Errors raised by the observer design and simulation pipeline.
#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },

    #[error("eigensolver failed to converge on a {size}x{size} matrix ({context})")]
    EigenNonConvergence { size: usize, context: String },

    #[error("unstable modes {indices:?} are linearly dependent (smallest singular value {sigma_min:e})")]
    RankDeficient { indices: Vec<usize>, sigma_min: f64 },

    #[error("pair (A, C) fails the Hautus test (worst margin {worst_margin:e})")]
    NotObservable { worst_margin: f64 },

    #[error("Riccati solve failed: {reason} (relative residual {residual:e}, closed-loop abscissa {abscissa:e})")]
    Riccati {
        reason: String,
        residual: f64,
        abscissa: f64,
    },

    #[error("decay fit failed: {0}")]
    Fit(String),

    #[error("insufficient snapshots: {0}")]
    InsufficientSnapshots(String),
}

pub type Result<T> = std::result::Result<T, ObserverError>;
