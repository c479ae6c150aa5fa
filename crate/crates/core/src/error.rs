use thiserror::Error;

/// Errors produced by the simulation, learning and analysis stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("trajectory diverged at step {step}: state {state:?}")]
    Diverged { step: usize, state: [f64; 2] },

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite state during reverse integration at step {step}")]
    ReverseDiverged { step: usize },

    #[error("non-finite training loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("WHAM did not converge after {iterations} iterations (last residual {residual:e})")]
    WhamNotConverged { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
