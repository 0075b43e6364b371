//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad ranges, mismatched lengths, unknown names).
    #[error("config error: {0}")]
    Config(String),

    /// A quantity left its mathematical domain (nonpositive variance,
    /// step size above the admissible threshold, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Client or component index out of range.
    #[error("index error: {0}")]
    Index(String),

    /// An operation was called with arguments violating its contract
    /// (missing minibatch draw, missing control variate, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// The deterministic minimizer did not reach tolerance within its
    /// iteration cap.
    #[error("optimization did not converge: final gradient norm {final_grad_norm:e}")]
    Optimization { final_grad_norm: f64 },

    /// The chain produced a non-finite or absurdly large state, which
    /// signals a step size too large for the potential.
    #[error("chain diverged at iteration {iteration}")]
    Divergence { iteration: u64 },

    /// An operation was called on an empty or otherwise unusable state.
    #[error("state error: {0}")]
    State(String),

    /// A serialized message or file failed validation.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
