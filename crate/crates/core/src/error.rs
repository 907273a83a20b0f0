use thiserror::Error;

/// Errors raised across the simulator, the solvers and the learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("solver failure: {reason}")]
    Solver {
        reason: String,
        /// Last iterate reached before giving up.
        last_iterate: Vec<f64>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
