//! Error types shared across the core modules.

use thiserror::Error;

/// Errors produced by model, protocol, simulation, and experiment code.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition (bad shapes, bad ratios, nonpositive values, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Training produced a non-finite value.
    #[error("numeric error in batch {batch_index}: {message}")]
    Numeric { batch_index: usize, message: String },

    /// A state machine was driven out of order.
    #[error("protocol order error: {0}")]
    ProtocolOrder(String),

    /// A message referenced a client the server does not know.
    #[error("unknown client {0}")]
    UnknownClient(u32),

    /// Scenario or run configuration is unusable.
    #[error("config error: {0}")]
    Config(String),

    /// Reading or writing an artifact failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A CSV artifact could not be parsed back into a report.
    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::ProtocolOrder(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
