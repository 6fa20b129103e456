use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PiError {
    #[error("non-finite matrix entries produced by generator at {at}")]
    NonFinite { at: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported order {order} (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("ill-conditioned matrix (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("near-degeneracy between levels {lower} and {upper}: gap {gap:e} below tolerance {tol:e}")]
    NearDegeneracy {
        lower: usize,
        upper: usize,
        gap: f64,
        tol: f64,
    },

    #[error("eigenframe tracking lost at sample {sample}: best overlap {overlap:.3}")]
    TrackingLost { sample: usize, overlap: f64 },

    #[error("under-resolved evolution: per-step generator norm {step_norm:.3e} exceeds {limit}")]
    Resolution { step_norm: f64, limit: f64 },

    #[error("dimension {dim} too small (minimum {min})")]
    TooSmall { dim: usize, min: usize },

    #[error("no degeneracy found: {0}")]
    NotFound(String),

    #[error("contour passes within {distance:.3e} of a degeneracy (clearance {clearance:e})")]
    Proximity { distance: f64, clearance: f64 },

    #[error("not converged: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, PiError>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(PiError::Contract(msg.into()))
}
