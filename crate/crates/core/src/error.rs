//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor, quantizer, surrogate and statistics operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A tensor was constructed with a zero-sized dimension or a data buffer
    /// whose length does not match the shape product.
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    /// Operand shapes are incompatible (e.g. matmul inner dimensions differ).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A quantized level lies outside the representable range.
    #[error("quantized level {level} outside [{q_min}, {q_max}]")]
    LevelOutOfRange {
        level: i64,
        q_min: i64,
        q_max: i64,
    },

    /// A configuration constraint was violated (bitwidth, scale, zero point,
    /// surrogate parameter range, sample count, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The surrogate denominator `1 + S` (or `1 - f'` for the rotated curve)
    /// is within 1e-12 of zero. Only reachable with amplitudes in the
    /// ill-conditioned regime.
    #[error("singular surrogate denominator at phase sum {0}")]
    SingularDenominator(f64),

    /// No closed form exists for the requested statistic.
    #[error("no closed form: {0}")]
    UnsupportedSpec(String),

    /// Sampling range is empty or inverted.
    #[error("invalid sampling range: l = {l}, u = {u}")]
    InvalidRange { l: f64, u: f64 },

    /// A reference-integral parameter lies outside the identity's domain.
    #[error("parameter outside domain: {0}")]
    OutOfDomain(String),

    /// The gradient cache does not match the loss gradient fed to the
    /// backward pass.
    #[error("stale forward cache: {0}")]
    StaleCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
