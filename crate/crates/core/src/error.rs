use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("invalid magnetic field: {0}")]
    InvalidMagnetic(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Net charge is not neutral; global neutrality is required for the
    /// free-space field to decay.
    #[error("global neutrality violated: |sum of net charge| = {net:.3e} exceeds {tol:.1e} x charge scale {abs:.3e}")]
    Neutrality { net: f64, abs: f64, tol: f64 },

    #[error("support breach: {0}")]
    SupportBreach(String),

    #[error("negative density {value:.3e} below clipping tolerance {tol:.3e}")]
    Negativity { value: f64, tol: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("rotation angle {angle:.4} exceeds the per-half-step bound pi/4")]
    RotationBound { angle: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations; residuals {history:?}")]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("insufficient snapshot window: need {needed}, got {got}")]
    InsufficientWindow { needed: usize, got: usize },

    #[error("snapshot time mismatch at index {index}: {left} vs {right}")]
    TimeMismatch { index: usize, left: f64, right: f64 },

    #[error("step {step} (t = {time:.6}): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("field file: {0}")]
    FieldFormat(String),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize, time: f64) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                time,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
