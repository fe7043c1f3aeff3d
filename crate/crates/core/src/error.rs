//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the geometry, fitting, detection, and metric routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("degenerate rotation input: {0}")]
    DegenerateRotation(String),

    #[error("invalid asset: {0}")]
    InvalidAsset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point {index} is behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("rank deficiency: {0}")]
    RankDeficiency(String),

    #[error("empty supervision: every ground-truth component is absent")]
    EmptySupervision,

    #[error("rotation decomposition failed: {0}")]
    Decomposition(String),

    #[error("insufficient landmarks: {visible} visible, need at least {needed}")]
    InsufficientLandmarks { visible: usize, needed: usize },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid distribution target: {0}")]
    InvalidTarget(String),

    #[error("zero confidence mass")]
    ZeroMass,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient frames: have {have}, need at least {need}")]
    InsufficientFrames { have: usize, need: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("objective evaluation returned a non-finite value at coordinate {index}")]
    Evaluation { index: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
