//! Uniform affine fake quantization.
//!
//! The forward rule is `x_q = clip(round(x/s) + z, q_min, q_max)` followed by
//! dequantization `s * (x_q - z)`. Scales come from a per-tensor max-abs
//! policy recomputed from the current values; they are never learned, so the
//! only gradient path is through `x` itself.

use crate::error::{Error, Result};
use crate::tensor::{Reduction, Tensor};

/// Tie-breaking rule for round-to-nearest.
///
/// `HalfToEven` is the default: it matches the common tensor libraries and
/// keeps results platform-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    HalfToEven,
    HalfAwayFromZero,
}

impl Rounding {
    pub fn round(self, x: f64) -> f64 {
        match self {
            Rounding::HalfToEven => x.round_ties_even(),
            Rounding::HalfAwayFromZero => x.round(),
        }
    }
}

/// Parameters of the uniform affine quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantConfig {
    pub bits: u32,
    pub signed: bool,
    /// Quantization step size, > 0.
    pub scale: f64,
    pub zero_point: i64,
    pub q_min: i64,
    pub q_max: i64,
    pub rounding: Rounding,
}

impl QuantConfig {
    /// Builds a config, deriving `[q_min, q_max]` from the bitwidth and
    /// signedness and validating every invariant.
    pub fn new(
        bits: u32,
        signed: bool,
        scale: f64,
        zero_point: i64,
        rounding: Rounding,
    ) -> Result<Self> {
        if !(2..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!(
                "bits must lie in [2, 8], got {bits}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        let (q_min, q_max) = if signed {
            (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
        } else {
            (0, (1i64 << bits) - 1)
        };
        if zero_point < q_min || zero_point > q_max {
            return Err(Error::InvalidArgument(format!(
                "zero point {zero_point} outside [{q_min}, {q_max}]"
            )));
        }
        Ok(Self {
            bits,
            signed,
            scale,
            zero_point,
            q_min,
            q_max,
            rounding,
        })
    }

    /// Signed config with zero point 0 and half-to-even ties; the default
    /// weight-quantizer shape used throughout the crate.
    pub fn symmetric(bits: u32, scale: f64) -> Result<Self> {
        Self::new(bits, true, scale, 0, Rounding::HalfToEven)
    }

    /// Symmetric config whose scale follows the per-tensor max-abs policy.
    pub fn for_tensor(t: &Tensor, bits: u32) -> Result<Self> {
        let template = Self::symmetric(bits, 1.0)?;
        let scale = compute_scale(t, &template);
        Self::symmetric(bits, scale)
    }

    /// Representable normalized range `[q_min - z, q_max - z]` as floats.
    pub fn normalized_range(&self) -> (f64, f64) {
        (
            (self.q_min - self.zero_point) as f64,
            (self.q_max - self.zero_point) as f64,
        )
    }
}

/// Per-tensor max-abs scale: `s = max_abs(t) / max(|q_min|, q_max)`, with
/// `s = 1` for the all-zero tensor so downstream division stays defined.
pub fn compute_scale(t: &Tensor, template: &QuantConfig) -> f64 {
    let max_abs = t.reduce(Reduction::MaxAbs);
    if max_abs == 0.0 {
        return 1.0;
    }
    let denom = (template.q_min.unsigned_abs().max(template.q_max.unsigned_abs())) as f64;
    max_abs / denom
}

/// Integer quantization level of a scalar: `clip(round(x/s) + z, q_min, q_max)`.
///
/// Total for every finite input; the clip absorbs anything outside the range.
pub fn quantize(x: f64, cfg: &QuantConfig) -> i64 {
    let rounded = cfg.rounding.round(x / cfg.scale);
    // The clamp also protects the i64 cast from overflowing on huge inputs.
    let level = rounded.clamp(cfg.q_min as f64 * 2.0 - 1.0, cfg.q_max as f64 * 2.0 + 1.0) as i64;
    (level + cfg.zero_point).clamp(cfg.q_min, cfg.q_max)
}

/// Real value represented by a level: `s * (x_q - z)`.
pub fn dequantize(level: i64, cfg: &QuantConfig) -> Result<f64> {
    if level < cfg.q_min || level > cfg.q_max {
        return Err(Error::LevelOutOfRange {
            level,
            q_min: cfg.q_min,
            q_max: cfg.q_max,
        });
    }
    Ok(cfg.scale * (level - cfg.zero_point) as f64)
}

/// Quantize-then-dequantize of a scalar, staying in floating point.
pub fn fake_quant_scalar(x: f64, cfg: &QuantConfig) -> f64 {
    cfg.scale * (quantize(x, cfg) - cfg.zero_point) as f64
}

/// Elementwise fake quantization; the output shape equals the input shape.
pub fn fake_quant(t: &Tensor, cfg: &QuantConfig) -> Tensor {
    t.map(|x| fake_quant_scalar(x, cfg))
}
