use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("q = {q} is outside the domain ({detail})")]
    Domain { q: f64, detail: String },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("cumulant is nonnegative over the whole scan range; no Malthusian root exists")]
    NoNegativeRegion,

    #[error("cumulant derivative at the smallest root is too flat ({0:e})")]
    FlatRoot(f64),

    #[error("q = {q} lies within the pole guard of the closed-form cumulant")]
    PoleProximity { q: f64 },

    #[error("spine triplet check failed: |deviation| = {max_error:e} at q = {at_q}")]
    ValidationFailure { max_error: f64, at_q: f64 },

    #[error("path too short: {0}")]
    PathTooShort(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("samples show no variation")]
    InsufficientVariation,

    #[error("insufficient spread: {0}")]
    InsufficientSpread(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("generation {requested} lies beyond the truncation cap {cap}")]
    GenerationBeyondTruncation { requested: usize, cap: usize },

    #[error("time {t} is at or beyond the simulation horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Coarse classification used by the command-line front end.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::InvalidModel(_)
            | Error::NoNegativeRegion
            | Error::FlatRoot(_)
            | Error::Unsupported(_)
            | Error::ValidationFailure { .. } => ErrorKind::Model,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Model,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
