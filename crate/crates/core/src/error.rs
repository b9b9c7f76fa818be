use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("amplitude magnitude {magnitude:e} is below the underflow threshold")]
    DegenerateAmplitude { magnitude: f64 },

    #[error("trace magnitude {magnitude:e} is below the underflow threshold")]
    DegenerateTrace { magnitude: f64 },

    #[error("sampling distribution is degenerate: {0}")]
    DegenerateDistribution(String),

    #[error("capacity exceeded: {what} = {requested} (maximum {limit})")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("cannot assemble moments from an empty batch")]
    EmptyBatch,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("integration stalled at t = {t}: step size {tau:e} fell below the floor")]
    StalledIntegration { t: f64, tau: f64 },

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
