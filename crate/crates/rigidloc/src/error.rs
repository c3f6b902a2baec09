//! Crate-wide error type.

use std::path::PathBuf;

/// Error type for construction, simulation, estimation, and harness failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{context}: entries must be finite")]
    NonFinite { context: &'static str },

    #[error("topology needs at least one sensor")]
    EmptyTopology,

    #[error("anchor set needs at least 2 anchors, got {got}")]
    TooFewAnchors { got: usize },

    #[error("null-space basis of the zero vector is undefined")]
    ZeroVector,

    #[error("range must be strictly positive, got {got}")]
    NonPositiveRange { got: f64 },

    #[error("standard deviation must be non-negative, got {got}")]
    NegativeStd { got: f64 },

    #[error("invalid noise model: {0}")]
    InvalidNoiseModel(String),

    #[error("anchor {anchor} coincides with sensor {sensor}")]
    CoincidentAnchorSensor { anchor: usize, sensor: usize },

    /// The whitener needs positive measured ranges to the reference sensor;
    /// a trial that violates this is aborted (and redrawn by the harness).
    #[error("measured range from anchor {anchor} to sensor 1 is non-positive ({got}); trial aborted")]
    NonPositiveMeasuredRange { anchor: usize, got: f64 },

    #[error("identifiability: {0}")]
    Identifiability(String),

    #[error("grid resolution must lie in (0, 30] degrees, got {got}")]
    InvalidResolution { got: f64 },

    #[error("metric requires a non-empty record set")]
    EmptyRecords,

    #[error("metric requires records sharing one method and one truth pose")]
    MixedRecords,

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("trial {trial} exhausted {attempts} redraw attempts")]
    RedrawBudgetExhausted { trial: usize, attempts: usize },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
