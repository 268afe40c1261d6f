//! Minimal dense-tensor arithmetic and the deterministic PRNG.
//!
//! Everything here is pure: operations never mutate their inputs and carry no
//! hidden state, so values are freely shareable across threads. All numerics
//! are f64; the theorem checks elsewhere in the crate need double precision.

use crate::error::{Error, Result};

/// Dense row-major f64 array with an explicit shape.
///
/// Invariants (enforced at construction): every shape entry is >= 1 and
/// `data.len() == shape.iter().product()`. There is no such thing as an
/// empty tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Reduction kinds understood by [`Tensor::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    /// `sqrt(sum of squares)`
    L2Norm,
    MaxAbs,
}

impl Tensor {
    /// Builds a tensor, validating the shape/data contract.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!(
                "zero-sized dimension in {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} wants {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// 1-D tensor from a value list.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Tensor filled with a constant.
    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    /// All-zeros tensor.
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Element of a 2-D tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    /// Elementwise map; the output shape equals the input shape.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combination of two same-shaped tensors.
    pub fn zip_map(&self, other: &Tensor, mut f: impl FnMut(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "zip_map {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Standard 2-D matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dims differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += a * row[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "transpose needs a 2-D tensor, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Scalar reduction. Tensors are nonempty by construction, so every kind
    /// is total.
    pub fn reduce(&self, kind: Reduction) -> f64 {
        match kind {
            Reduction::Sum => self.data.iter().sum(),
            Reduction::Mean => self.data.iter().sum::<f64>() / self.data.len() as f64,
            Reduction::L2Norm => self.data.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Reduction::MaxAbs => self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
        }
    }
}

/// SplitMix64 pseudorandom generator.
///
/// Fixed algorithm (Steele, Lea & Flood 2014): 64-bit state advanced by the
/// golden-gamma constant, finalized by two xor-shift-multiply rounds. The
/// same seed yields the same stream on every platform, and child streams are
/// derived by hashing `(state, stream index)`, which makes the generator
/// splittable for sharded sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached
    /// second value, so the stream position is a pure function of the number
    /// of calls).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        // 1 - u1 lies in (0, 1], keeping ln() finite.
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Independent child stream for shard `index`; does not advance `self`.
    pub fn split(&self, index: u64) -> Rng {
        Rng::new(mix64(
            self.state ^ index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1),
        ))
    }

    /// Tensor of i.i.d. uniform values in `[lo, hi)`.
    pub fn uniform_tensor(&mut self, shape: Vec<usize>, lo: f64, hi: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.range(lo, hi)).collect();
        Tensor::new(shape, data)
    }

    /// Tensor of i.i.d. standard normal values.
    pub fn normal_tensor(&mut self, shape: Vec<usize>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal()).collect();
        Tensor::new(shape, data)
    }
}
