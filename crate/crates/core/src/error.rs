use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("uniformization rate too small: gamma = {gamma} < gamma0 = {gamma0}")]
    RateTooSmall { gamma: f64, gamma0: f64 },

    #[error("invalid intensity family: {0}")]
    InvalidFamily(String),

    #[error("time {s} exceeds the horizon {horizon} the table was sized for")]
    BeyondHorizon { s: f64, horizon: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("payment evaluation failed: {0}")]
    Payment(String),

    #[error("premium has zero sensitivity; the free coefficient cannot be determined")]
    ZeroSensitivity,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
