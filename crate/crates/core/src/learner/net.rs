//! Dense autoencoder with a power-normalized latent and an AWGN channel.
//!
//! Parameters live in one flat vector so they can be averaged directly. Each
//! layer stores its weight matrix row-major (`out × in`) followed by its bias.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::{psnr_from_mse, ssim};
use super::{derive_seed, LearnerError};
use crate::aggregation::{ClientReport, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative at pre-activation `a`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Encoder widths; the decoder mirrors them.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            input_dim: 64,
            latent_dim: 16,
            hidden_dims: vec![32],
            activation: Activation::Tanh,
        }
    }
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(LearnerError::InvalidSpec("all dimensions must be at least 1".into()));
        }
        if self.latent_dim >= self.input_dim {
            return Err(LearnerError::InvalidSpec(format!(
                "latent {} does not compress input {}",
                self.latent_dim, self.input_dim
            )));
        }
        Ok(())
    }

    /// `(in, out)` per layer, encoder then decoder.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(self.latent_dim);
        widths.extend(self.hidden_dims.iter().rev());
        widths.push(self.input_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Index of the layer producing the latent.
    fn latent_layer(&self) -> usize {
        self.hidden_dims.len()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Fingerprint stored with every parameter vector.
    pub fn layout(&self) -> String {
        let hidden: Vec<String> = self.hidden_dims.iter().map(|h| h.to_string()).collect();
        let act = match self.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        };
        format!("ae:{}-[{}]-{}:{}", self.input_dim, hidden.join(","), self.latent_dim, act)
    }

    /// Uniform fan-scaled weights (He for relu, Glorot for tanh), zero biases.
    pub fn init(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_dims() {
            let limit = match self.activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            for _ in 0..fan_in * fan_out {
                values.push(rng.random_range(-limit..limit));
            }
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        ParamVector::new(values, self.layout())
    }

    fn check_params(&self, params: &ParamVector) -> Result<(), LearnerError> {
        let layout = self.layout();
        if params.layout != layout {
            return Err(LearnerError::LayoutMismatch {
                expected: layout,
                found: params.layout.clone(),
            });
        }
        if params.len() != self.param_count() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), LearnerError> {
        if x.len() != self.input_dim {
            return Err(LearnerError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Channel SNR seen during training; `+∞` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            batch_size: 8,
            snr_db: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.learning_rate > 0.0) {
            return Err(LearnerError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(LearnerError::InvalidConfig("batch size 0".into()));
        }
        Ok(())
    }
}

/// Standard deviation of the per-symbol channel noise at unit signal power.
pub fn noise_std(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 20.0)
    }
}

/// `k` Gaussian channel symbols for `snr_db`; empty when noise is off.
pub fn sample_noise<R: Rng>(rng: &mut R, k: usize, snr_db: f64) -> Vec<f64> {
    let sd = noise_std(snr_db);
    if sd == 0.0 {
        return Vec::new();
    }
    (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Scales `z` to average symbol power one: `z·sqrt(k)/‖z‖`. The zero vector
/// maps to itself.
pub fn power_normalize(z: &[f64]) -> Vec<f64> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; z.len()];
    }
    let s = (z.len() as f64).sqrt() / norm;
    z.iter().map(|v| v * s).collect()
}

/// Vector-Jacobian product of [`power_normalize`] at `z` with upstream `g`.
fn power_normalize_backward(z: &[f64], g: &[f64]) -> Vec<f64> {
    let sq: f64 = z.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return vec![0.0; z.len()];
    }
    let norm = sq.sqrt();
    let s = (z.len() as f64).sqrt() / norm;
    let zg: f64 = z.iter().zip(g).map(|(a, b)| a * b).sum();
    z.iter().zip(g).map(|(zi, gi)| s * (gi - zi * zg / sq)).collect()
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Intermediate values kept for the backward pass.
struct Trace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Affine output of each layer.
    pre: Vec<Vec<f64>>,
    latent: Vec<f64>,
    output: Vec<f64>,
}

fn affine(p: &[f64], offset: usize, n_in: usize, n_out: usize, x: &[f64]) -> Vec<f64> {
    let w = &p[offset..offset + n_in * n_out];
    let b = &p[offset + n_in * n_out..offset + n_in * n_out + n_out];
    (0..n_out)
        .map(|j| {
            let row = &w[j * n_in..(j + 1) * n_in];
            b[j] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

fn trace(spec: &AutoencoderSpec, p: &[f64], x: &[f64], noise: &[f64]) -> Trace {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let latent_layer = spec.latent_layer();
    let mut inputs = Vec::with_capacity(dims.len());
    let mut pre = Vec::with_capacity(dims.len());
    let mut latent = Vec::new();
    let mut h = x.to_vec();
    let mut offset = 0;
    for (l, &(n_in, n_out)) in dims.iter().enumerate() {
        let a = affine(p, offset, n_in, n_out, &h);
        offset += n_in * n_out + n_out;
        inputs.push(std::mem::take(&mut h));
        h = if l == latent_layer {
            latent = power_normalize(&a);
            let mut y = latent.clone();
            for (yi, ni) in y.iter_mut().zip(noise) {
                *yi += ni;
            }
            y
        } else if l == last {
            a.iter().map(|&v| sigmoid(v)).collect()
        } else {
            a.iter().map(|&v| spec.activation.apply(v)).collect()
        };
        pre.push(a);
    }
    Trace {
        inputs,
        pre,
        latent,
        output: h,
    }
}

/// Adds `∂loss/∂params` to `grad` given `∂loss/∂output`.
fn backward(spec: &AutoencoderSpec, p: &[f64], t: &Trace, d_output: Vec<f64>, grad: &mut [f64]) {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let latent_layer = spec.latent_layer();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &(i, o) in &dims {
        offsets.push(acc);
        acc += i * o + o;
    }
    let mut g = d_output;
    for l in (0..dims.len()).rev() {
        let (n_in, n_out) = dims[l];
        let delta: Vec<f64> = if l == last {
            g.iter().zip(&t.output).map(|(gi, y)| gi * y * (1.0 - y)).collect()
        } else if l == latent_layer {
            // Channel noise is additive and held fixed, so it passes g unchanged.
            power_normalize_backward(&t.pre[l], &g)
        } else {
            g.iter().zip(&t.pre[l]).map(|(gi, a)| gi * spec.activation.slope(*a)).collect()
        };
        let off = offsets[l];
        let input = &t.inputs[l];
        for j in 0..n_out {
            let d = delta[j];
            if d != 0.0 {
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            grad[off + n_in * n_out + j] += d;
        }
        if l > 0 {
            let w = &p[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d != 0.0 {
                    for (pi, wji) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *pi += d * wji;
                    }
                }
            }
            g = prev;
        }
    }
}

fn sample_loss(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / x.len() as f64
}

/// Mean over the batch of per-sample pixel MSE, with `noises[i]` added to
/// sample `i`'s latent (an empty vector means a clean channel).
pub fn batch_loss(spec: &AutoencoderSpec, params: &[f64], batch: &[&[f64]], noises: &[Vec<f64>]) -> f64 {
    let total: f64 = batch
        .iter()
        .zip(noises)
        .map(|(x, n)| sample_loss(x, &trace(spec, params, x, n).output))
        .sum();
    total / batch.len() as f64
}

/// [`batch_loss`] and its gradient with respect to every parameter.
pub fn loss_and_grad(
    spec: &AutoencoderSpec,
    params: &[f64],
    batch: &[&[f64]],
    noises: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (x, n) in batch.iter().zip(noises) {
        let t = trace(spec, params, x, n);
        total += sample_loss(x, &t.output);
        let d = 2.0 * scale / x.len() as f64;
        let d_out = t.output.iter().zip(x.iter()).map(|(y, xi)| d * (y - xi)).collect();
        backward(spec, params, &t, d_out, &mut grad);
    }
    (total * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub reconstruction: Vec<f64>,
    /// Normalized symbols before channel noise.
    pub latent: Vec<f64>,
}

/// Encode, send over AWGN at `snr_db` (noise drawn from `noise_seed`), decode.
pub fn forward(
    spec: &AutoencoderSpec,
    params: &ParamVector,
    x: &[f64],
    snr_db: f64,
    noise_seed: u64,
) -> Result<Forward, LearnerError> {
    spec.check_params(params)?;
    spec.check_input(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = sample_noise(&mut rng, spec.latent_dim, snr_db);
    let t = trace(spec, &params.values, x, &noise);
    Ok(Forward {
        reconstruction: t.output,
        latent: t.latent,
    })
}

/// Runs `k` epochs of mini-batch SGD over `dataset`, drawing fresh channel
/// noise for every sample visit.
///
/// The reported loss is the mean sample loss of the last epoch, or of one
/// evaluation pass over the data when `k == 0`.
pub fn train_epochs(
    spec: &AutoencoderSpec,
    params: &ParamVector,
    dataset: &Dataset,
    k: u32,
    cfg: &TrainConfig,
) -> Result<ClientReport, LearnerError> {
    spec.check_params(params)?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    for s in &dataset.samples {
        spec.check_input(s)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut p = params.values.clone();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let loss = if k == 0 {
        let batch: Vec<&[f64]> = dataset.samples.iter().map(Vec::as_slice).collect();
        let noises: Vec<Vec<f64>> = batch
            .iter()
            .map(|_| sample_noise(&mut rng, spec.latent_dim, cfg.snr_db))
            .collect();
        batch_loss(spec, &p, &batch, &noises)
    } else {
        let mut last = 0.0;
        for _ in 0..k {
            order.shuffle(&mut rng);
            let mut epoch_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&[f64]> = chunk.iter().map(|&i| dataset.samples[i].as_slice()).collect();
                let noises: Vec<Vec<f64>> = chunk
                    .iter()
                    .map(|_| sample_noise(&mut rng, spec.latent_dim, cfg.snr_db))
                    .collect();
                let (l, g) = loss_and_grad(spec, &p, &batch, &noises);
                epoch_sum += l * chunk.len() as f64;
                for (pi, gi) in p.iter_mut().zip(&g) {
                    *pi -= cfg.learning_rate * gi;
                }
            }
            last = epoch_sum / dataset.len() as f64;
        }
        last
    };
    Ok(ClientReport {
        sat_id: dataset.owner.unwrap_or(0),
        params: ParamVector::new(p, params.layout.clone()),
        data_count: dataset.len(),
        epochs: k,
        loss,
    })
}

/// Held-out reconstruction quality at one channel SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub snr_db: f64,
    /// Pixel MSE pooled over every sample.
    pub mse: f64,
    pub psnr_db: f64,
    /// Mean per-sample SSIM.
    pub ssim: f64,
}

/// Evaluates `params` on `samples`; sample `i` uses noise seed
/// `derive_seed(seed, i)` so repeated evaluations see the same channel.
pub fn evaluate(
    spec: &AutoencoderSpec,
    params: &ParamVector,
    samples: &[Vec<f64>],
    image_width: usize,
    snr_db: f64,
    seed: u64,
) -> Result<EvalResult, LearnerError> {
    if samples.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let (mut sq, mut ss) = (0.0, 0.0);
    for (i, x) in samples.iter().enumerate() {
        let out = forward(spec, params, x, snr_db, derive_seed(seed, i as u64))?;
        sq += sample_loss(x, &out.reconstruction);
        ss += ssim(x, &out.reconstruction, image_width, 1.0)?;
    }
    let n = samples.len() as f64;
    let mse = sq / n;
    Ok(EvalResult {
        snr_db,
        mse,
        psnr_db: psnr_from_mse(mse, 1.0),
        ssim: ss / n,
    })
}
