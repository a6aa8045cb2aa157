use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("invalid sketch configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("epsilon must be a finite positive number, got {0}")]
    InvalidEpsilon(f64),
    #[error("sketches are not mergeable: {field} differs")]
    Incompatible { field: &'static str },
    #[error("sketch is saturated; the estimator diverges")]
    Saturated,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed sketch file: {0}")]
    Format(String),
}

pub type Result<T, E = SketchError> = std::result::Result<T, E>;
