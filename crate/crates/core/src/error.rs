use thiserror::Error;

use crate::optimize::OptimError;

/// Errors raised across catalog handling, fitting and diagnostics.
#[derive(Debug, Error)]
pub enum EtasError {
    #[error("catalog format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("supercritical model: alpha = {alpha} is not below beta = {beta}")]
    Supercritical { alpha: f64, beta: f64 },

    #[error("time scale is not monotone: event {first} (t = {t_first}) maps at or after event {second} (t = {t_second})")]
    NonMonotone {
        first: usize,
        second: usize,
        t_first: f64,
        t_second: f64,
    },

    #[error("usage measure undefined: {0}")]
    UsageUndefined(String),

    #[error("background smoothing has no mass: every weight is zero")]
    NoBackgroundMass,

    #[error("non-positive intensity {value} at event {event}")]
    ZeroIntensity { event: usize, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("HTTP request failed with status {status}")]
    Http { status: u16 },

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Optim(#[from] OptimError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EtasError>;
