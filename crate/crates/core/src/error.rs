//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("mode count must be at least 1")]
    EmptyModeCount,

    #[error("mode-count mismatch: {left} vs {right}")]
    ModeCountMismatch { left: usize, right: usize },

    #[error("mode index {index} out of range for {modes} modes")]
    ModeIndexOutOfRange { index: usize, modes: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not unitary: deviation {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("permanent limited to matrices of size {max}, got {n}")]
    PermanentTooLarge { n: usize, max: usize },

    #[error("sigma must be non-negative, got {0}")]
    NegativeSigma(f64),

    #[error("two-mode kernel needs distinct modes, got ({0}, {0})")]
    DegenerateModePair(usize),

    #[error("code vectors are not orthonormal: deviation {deviation:.3e}")]
    NonOrthonormalCode { deviation: f64 },

    #[error("time grid under-resolved: step {step:.3e} exceeds required {required:.3e}")]
    GridUnderResolved { step: f64, required: f64 },

    #[error("pulse is not symmetric about the grid center: deviation {deviation:.3e}")]
    AsymmetricPulse { deviation: f64 },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("basis size {size} exceeds configured cap {cap}")]
    BasisTooLarge { size: u128, cap: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
