//! Weight-only QAT training loop at desk scale.
//!
//! A two-layer tanh MLP with hand-coded reverse-mode gradients, trained with
//! plain SGD on synthetic regression data. When quantization is on, the
//! forward product uses fake-quantized weights (per-tensor max-abs scale,
//! recomputed every step, no gradient into the scale) and the backward pass
//! multiplies each weight gradient by the configured surrogate.
//!
//! The loop is single-threaded and every random choice comes from fixed
//! streams of the crate PRNG, so the log is a pure function of the config.
//! A non-finite loss or gradient is recorded as a failure row and stops the
//! run; it is never silently swallowed.

use crate::error::{Error, Result};
use crate::quantizer::{fake_quant, QuantConfig};
use crate::surrogate::{surrogate_backward, Surrogate};
use crate::tensor::{Reduction, Rng, Tensor};

/// Default hidden sizes: big enough that 2-3 bit weights visibly perturb
/// training, small enough for finite-difference checks on a shrunken
/// sibling.
pub const DEFAULT_DIMS: [usize; 3] = [8, 32, 1];

/// Number of synthetic samples generated per run.
pub const DATASET_SIZE: usize = 256;

/// Standard deviation of the additive target noise.
pub const NOISE_SIGMA: f64 = 0.01;

/// Two-layer perceptron `x -> tanh(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dims: [usize; 3],
    /// `[d_in, d_hidden]`
    pub w1: Tensor,
    /// `[1, d_hidden]`
    pub b1: Tensor,
    /// `[d_hidden, d_out]`
    pub w2: Tensor,
    /// `[1, d_out]`
    pub b2: Tensor,
}

impl MlpModel {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weight init, zero biases.
    pub fn init(dims: [usize; 3], rng: &mut Rng) -> Self {
        let [d_in, d_h, d_out] = dims;
        let lim1 = 1.0 / (d_in as f64).sqrt();
        let lim2 = 1.0 / (d_h as f64).sqrt();
        MlpModel {
            dims,
            w1: rng.uniform_tensor(vec![d_in, d_h], -lim1, lim1).unwrap(),
            b1: Tensor::zeros(vec![1, d_h]).unwrap(),
            w2: rng.uniform_tensor(vec![d_h, d_out], -lim2, lim2).unwrap(),
            b2: Tensor::zeros(vec![1, d_out]).unwrap(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

/// Synthetic regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// `y = x W* + noise` for a fixed hidden `W*`.
    LinearSynth,
    /// `y = sin(2 pi <w*, x>) + noise`, scalar targets.
    SineSynth,
}

impl DatasetKind {
    pub fn label(self) -> &'static str {
        match self {
            DatasetKind::LinearSynth => "linear_synth",
            DatasetKind::SineSynth => "sine_synth",
        }
    }
}

/// Experiment knobs for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight bitwidth in `[2, 8]`; 0 disables quantization entirely.
    pub bits: u32,
    pub surrogate: Surrogate,
    pub steps: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub log_every: u32,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits != 0 && !(2..=8).contains(&self.bits) {
            return Err(Error::InvalidArgument(format!(
                "bits must be 0 (off) or in [2, 8], got {}",
                self.bits
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.log_every < 1 {
            return Err(Error::InvalidArgument("log_every must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bits: 3,
            surrogate: Surrogate::Rdfs {
                amplitude: crate::surrogate::DEFAULT_AMPLITUDE,
                order: crate::surrogate::DEFAULT_ORDER,
            },
            steps: 2000,
            batch_size: 32,
            learning_rate: 0.02,
            seed: 0,
            dataset: DatasetKind::LinearSynth,
            log_every: 10,
        }
    }
}

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: u32,
    pub loss: f64,
    /// Global L2 norm over all parameter gradients.
    pub grad_norm: f64,
    pub lr: f64,
}

/// Recorded non-finite event; the offending row is kept in the log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub step: u32,
    pub what: String,
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub rows: Vec<TrainLogRow>,
    pub failure: Option<TrainFailure>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Deterministic synthetic dataset: `inputs [n, d_in]`, `targets [n, d_out]`
/// with additive Gaussian noise of standard deviation `sigma`.
pub fn synth_dataset(
    kind: DatasetKind,
    n: usize,
    d_in: usize,
    d_out: usize,
    sigma: f64,
    seed: u64,
) -> Result<(Tensor, Tensor)> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument("dataset dims must be >= 1".into()));
    }
    if kind == DatasetKind::SineSynth && d_out != 1 {
        return Err(Error::InvalidArgument(
            "sine_synth produces scalar targets".into(),
        ));
    }
    let base = Rng::new(seed);
    let mut x_rng = base.split(1);
    let mut w_rng = base.split(2);
    let mut noise_rng = base.split(3);

    let x = x_rng.normal_tensor(vec![n, d_in])?;
    let scale = 1.0 / (d_in as f64).sqrt();
    let w_star = w_rng.normal_tensor(vec![d_in, d_out])?.map(|v| v * scale);

    let y = match kind {
        DatasetKind::LinearSynth => {
            let clean = x.matmul(&w_star)?;
            clean.map(|v| v + sigma * noise_rng.normal())
        }
        DatasetKind::SineSynth => {
            let dot = x.matmul(&w_star)?;
            dot.map(|v| (2.0 * std::f64::consts::PI * v).sin() + sigma * noise_rng.normal())
        }
    };
    Ok((x, y))
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Tensor,
    w1_pre: Tensor,
    w2_pre: Tensor,
    w_used: (Tensor, Tensor),
    cfgs: Option<(QuantConfig, QuantConfig)>,
    a1: Tensor,
    pred_shape: Vec<usize>,
}

/// Parameter gradients in model layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ParamGrads {
    pub fn global_l2_norm(&self) -> f64 {
        let sq = |t: &Tensor| t.map(|v| v * v).reduce(Reduction::Sum);
        (sq(&self.w1) + sq(&self.b1) + sq(&self.w2) + sq(&self.b2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let ok = |t: &Tensor| t.data().iter().all(|v| v.is_finite());
        ok(&self.w1) && ok(&self.b1) && ok(&self.w2) && ok(&self.b2)
    }
}

fn add_row_bias(t: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let cols = t.shape()[1];
    if bias.shape() != [1, cols] {
        return Err(Error::ShapeMismatch(format!(
            "bias {:?} does not broadcast over {:?}",
            bias.shape(),
            t.shape()
        )));
    }
    let b = bias.data();
    let mut out = t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += b[i % cols];
    }
    Ok(out)
}

/// Sums each column of a `[rows, cols]` tensor into a `[1, cols]` tensor.
fn column_sums(t: &Tensor) -> Tensor {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c] += t.at(r, c);
        }
    }
    Tensor::new(vec![1, cols], out).unwrap()
}

/// Forward pass; with `quant_on` each weight tensor enters the product
/// fake-quantized at `bits` with a fresh per-tensor max-abs scale.
pub fn qat_forward(
    model: &MlpModel,
    x: &Tensor,
    bits: u32,
    quant_on: bool,
) -> Result<(Tensor, ForwardCache)> {
    if x.shape().len() != 2 || x.shape()[1] != model.dims[0] {
        return Err(Error::ShapeMismatch(format!(
            "input {:?} does not match d_in {}",
            x.shape(),
            model.dims[0]
        )));
    }
    let (w1_used, w2_used, cfgs) = if quant_on {
        let cfg1 = QuantConfig::for_tensor(&model.w1, bits)?;
        let cfg2 = QuantConfig::for_tensor(&model.w2, bits)?;
        (
            fake_quant(&model.w1, &cfg1),
            fake_quant(&model.w2, &cfg2),
            Some((cfg1, cfg2)),
        )
    } else {
        (model.w1.clone(), model.w2.clone(), None)
    };

    let z1 = add_row_bias(&x.matmul(&w1_used)?, &model.b1)?;
    let a1 = z1.map(f64::tanh);
    let pred = add_row_bias(&a1.matmul(&w2_used)?, &model.b2)?;

    let cache = ForwardCache {
        x: x.clone(),
        w1_pre: model.w1.clone(),
        w2_pre: model.w2.clone(),
        w_used: (w1_used, w2_used),
        cfgs,
        a1,
        pred_shape: pred.shape().to_vec(),
    };
    Ok((pred, cache))
}

/// Reverse-mode gradients from a cached forward pass.
///
/// Biases and activations use exact derivatives; weight gradients are taken
/// at the dequantized weights and then passed through the surrogate
/// multiplier elementwise (zero where the quantizer clipped).
pub fn qat_backward(cache: &ForwardCache, loss_grad: &Tensor, spec: &Surrogate) -> Result<ParamGrads> {
    if loss_grad.shape() != cache.pred_shape.as_slice() {
        return Err(Error::StaleCache(format!(
            "loss gradient {:?} does not match cached prediction {:?}",
            loss_grad.shape(),
            cache.pred_shape
        )));
    }
    let (w1_used, w2_used) = &cache.w_used;

    let d_w2_used = cache.a1.transpose()?.matmul(loss_grad)?;
    let d_b2 = column_sums(loss_grad);
    let d_a1 = loss_grad.matmul(&w2_used.transpose()?)?;
    let d_z1 = d_a1.zip_map(&cache.a1, |g, a| g * (1.0 - a * a))?;
    let d_w1_used = cache.x.transpose()?.matmul(&d_z1)?;
    let d_b1 = column_sums(&d_z1);

    let (d_w1, d_w2) = match &cache.cfgs {
        Some((cfg1, cfg2)) => (
            surrogate_backward(&d_w1_used, &cache.w1_pre, cfg1, spec)?,
            surrogate_backward(&d_w2_used, &cache.w2_pre, cfg2, spec)?,
        ),
        None => (d_w1_used, d_w2_used),
    };
    let _ = w1_used; // retained in the cache for inspection

    Ok(ParamGrads {
        w1: d_w1,
        b1: d_b1,
        w2: d_w2,
        b2: d_b2,
    })
}

/// Mean-squared-error loss over all entries.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    Ok(pred
        .zip_map(target, |p, t| (p - t) * (p - t))?
        .reduce(Reduction::Mean))
}

/// Gradient of [`mse_loss`] with respect to the prediction.
pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let n = pred.len() as f64;
    pred.zip_map(target, move |p, t| 2.0 * (p - t) / n)
}

/// Runs plain SGD and returns the log. Errors only on an invalid config;
/// non-finite losses or gradients are recorded in the outcome instead.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let quant_on = cfg.bits != 0;
    let dims = DEFAULT_DIMS;
    let (xs, ys) = synth_dataset(cfg.dataset, DATASET_SIZE, dims[0], dims[2], NOISE_SIGMA, cfg.seed)?;

    let base = Rng::new(cfg.seed);
    let mut init_rng = base.split(100);
    let mut batch_rng = base.split(200);
    let mut model = MlpModel::init(dims, &mut init_rng);

    let mut rows = Vec::new();
    let mut failure = None;

    for step in 1..=cfg.steps {
        // gather a batch (with replacement)
        let mut xb = Vec::with_capacity(cfg.batch_size * dims[0]);
        let mut yb = Vec::with_capacity(cfg.batch_size * dims[2]);
        for _ in 0..cfg.batch_size {
            let idx = (batch_rng.next_u64() % DATASET_SIZE as u64) as usize;
            xb.extend_from_slice(&xs.data()[idx * dims[0]..(idx + 1) * dims[0]]);
            yb.extend_from_slice(&ys.data()[idx * dims[2]..(idx + 1) * dims[2]]);
        }
        let xb = Tensor::new(vec![cfg.batch_size, dims[0]], xb)?;
        let yb = Tensor::new(vec![cfg.batch_size, dims[2]], yb)?;

        let (pred, cache) = qat_forward(&model, &xb, cfg.bits, quant_on)?;
        let loss = mse_loss(&pred, &yb)?;
        if !loss.is_finite() {
            rows.push(TrainLogRow {
                step,
                loss,
                grad_norm: f64::NAN,
                lr: cfg.learning_rate,
            });
            failure = Some(TrainFailure {
                step,
                what: format!("non-finite loss {loss}"),
            });
            break;
        }

        let grads = qat_backward(&cache, &mse_grad(&pred, &yb)?, &cfg.surrogate)?;
        let grad_norm = grads.global_l2_norm();
        if !grads.is_finite() {
            rows.push(TrainLogRow {
                step,
                loss,
                grad_norm,
                lr: cfg.learning_rate,
            });
            failure = Some(TrainFailure {
                step,
                what: "non-finite gradient".into(),
            });
            break;
        }

        if step == 1 || step % cfg.log_every == 0 || step == cfg.steps {
            rows.push(TrainLogRow {
                step,
                loss,
                grad_norm,
                lr: cfg.learning_rate,
            });
        }

        let lr = cfg.learning_rate;
        let apply = |param: &mut Tensor, grad: &Tensor| {
            for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                *p -= lr * g;
            }
        };
        apply(&mut model.w1, &grads.w1);
        apply(&mut model.b1, &grads.b1);
        apply(&mut model.w2, &grads.w2);
        apply(&mut model.b2, &grads.b2);
    }

    Ok(TrainOutcome { rows, failure })
}
