//! A laboratory for low-bit quantization-aware training surrogates.
//!
//! The crate implements uniform affine fake quantization, three backward
//! rules for the rounding operator (straight-through, a rotated damped
//! Fourier surrogate, and tanh-based soft quantization), the rotated
//! triangle-wave analysis behind the Fourier surrogate, closed-form and
//! Monte Carlo gradient statistics, a toy weight-only QAT training loop,
//! and latency microbenchmarks of the surrogate kernels.
//!
//! All numerics are f64 and every random choice flows from a fixed,
//! splittable SplitMix64 stream, so results reproduce bit-for-bit across
//! runs.

pub mod bench;
pub mod error;
pub mod fourier;
pub mod quad;
pub mod quantizer;
pub mod stats;
pub mod surrogate;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use quantizer::{QuantConfig, Rounding};
pub use surrogate::{DsqLayout, Surrogate};
pub use tensor::{Reduction, Rng, Tensor};
