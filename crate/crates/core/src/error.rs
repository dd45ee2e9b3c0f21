use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: module {module} has activation {value} (allowed 0..={max})")]
    InvalidConfiguration { module: usize, value: u8, max: u8 },

    #[error("invalid configuration: expected {expected} activations, got {got}")]
    InvalidLength { expected: usize, got: usize },

    #[error("invalid configuration id {0} (allowed 0..=4607)")]
    InvalidId(i64),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("unsupported function id {0}")]
    UnsupportedFunction(u32),

    #[error("invalid splitpoint {splitpoint}: must not be below the final target {target}")]
    InvalidSplitpoint { splitpoint: f64, target: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error("no records")]
    NoRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
