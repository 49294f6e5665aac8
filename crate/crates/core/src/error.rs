use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The prediction horizon does not exceed the stopping horizon, so the
    /// shifted candidate cannot be built.
    #[error("horizon {horizon} must exceed the stopping horizon b = {stopping_horizon}")]
    HorizonTooShort {
        horizon: usize,
        stopping_horizon: usize,
    },

    #[error("warm start is not feasible: {0}")]
    InfeasibleWarmStart(String),

    /// A closed-loop invariant that should hold by construction was broken.
    #[error("invariant breach at step {step}: {msg}")]
    InvariantBreach { step: usize, msg: String },

    #[error("{path}:{line}: {msg}")]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("metrics window {start}..={end} does not fit a trace of {len} records")]
    Window {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
