use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pricing, simulation and calibration routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invariant violated for `{field}`: {reason}")]
    Invariant { field: &'static str, reason: String },

    #[error("parse error in {path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("index error: {0}")]
    Index(String),

    #[error(
        "correlation matrix is not positive definite even after diagonal jitter; try a larger decay rate or add jitter"
    )]
    NotPositiveDefinite,

    #[error("undefined correlation between {0} and {1}: zero instantaneous variance")]
    UndefinedCorrelation(String, String),

    #[error("degenerate drift at {what}: effective mean-reversion speed {kappa:.6e} is not positive")]
    DegenerateDrift { what: String, kappa: f64 },

    #[error("unsupported strike {strike}: displaced strike {displaced} is negative")]
    UnsupportedStrike { strike: f64, displaced: f64 },

    #[error("characteristic function fails martingale check: |phi(-i) - 1| = {0:.3e}")]
    Martingale(f64),

    #[error("quadrature did not converge: estimated price error {estimate:.3e} exceeds {tolerance:.3e}")]
    Accuracy { estimate: f64, tolerance: f64 },

    #[error("price {price:.6e} outside the no-arbitrage band ({lower:.6e}, {upper:.6e})")]
    Arbitrage { price: f64, lower: f64, upper: f64 },

    #[error("root finder failed: {0}")]
    RootFinding(String),

    #[error("non-finite state in path {path} at step {step} (t = {time:.4}): {what}")]
    Simulation {
        path: usize,
        step: usize,
        time: f64,
        what: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCurve(_) => "invalid-curve",
            Error::Invariant { .. } => "invariant",
            Error::Parse { .. } => "parse",
            Error::Index(_) => "index",
            Error::NotPositiveDefinite => "not-positive-definite",
            Error::UndefinedCorrelation(..) => "undefined-correlation",
            Error::DegenerateDrift { .. } => "degenerate-drift",
            Error::UnsupportedStrike { .. } => "unsupported-strike",
            Error::Martingale(_) => "martingale",
            Error::Accuracy { .. } => "accuracy",
            Error::Arbitrage { .. } => "arbitrage",
            Error::RootFinding(_) => "root-finding",
            Error::Simulation { .. } => "simulation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
