//! One-hidden-layer MLP head: forward pass, binary cross-entropy, analytic
//! gradients and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch between parameters and optimizer state")]
    ShapeMismatch,
}

/// Parameters stored as one flat buffer: `W1` (hidden × input, row-major),
/// `b1` (hidden), `W2` (hidden), `b2` (1).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

impl MlpParams {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self { input_dim, hidden, theta: vec![0.0; Self::param_count(input_dim, hidden)] }
    }

    pub fn from_flat(input_dim: usize, hidden: usize, theta: Vec<f64>) -> Result<Self, ClassifierError> {
        let expected = Self::param_count(input_dim, hidden);
        if theta.len() != expected {
            return Err(ClassifierError::DimensionMismatch { expected, got: theta.len() });
        }
        Ok(Self { input_dim, hidden, theta })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dim, hidden);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        p.w1_mut().iter_mut().for_each(|w| *w = rng.gen_range(-a1..=a1));
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        p.w2_mut().iter_mut().for_each(|w| *w = rng.gen_range(-a2..=a2));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn w1_len(&self) -> usize {
        self.hidden * self.input_dim
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.w1_len()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.theta[self.w1_len()..self.w1_len() + self.hidden]
    }

    pub fn w2(&self) -> &[f64] {
        &self.theta[self.w1_len() + self.hidden..self.w1_len() + 2 * self.hidden]
    }

    pub fn b2(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let n = self.w1_len();
        &mut self.theta[..n]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let (n, h) = (self.w1_len(), self.hidden);
        &mut self.theta[n..n + h]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let (n, h) = (self.w1_len(), self.hidden);
        &mut self.theta[n + h..n + 2 * h]
    }

    pub fn set_b2(&mut self, v: f64) {
        let last = self.theta.len() - 1;
        self.theta[last] = v;
    }

    /// Rounds every parameter to the nearest f32, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        self.theta.iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub logit: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `p = sigmoid(W2 · relu(W1 x + b1) + b2)`.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<(f64, ForwardCache), ClassifierError> {
    if x.len() != params.input_dim {
        return Err(ClassifierError::DimensionMismatch { expected: params.input_dim, got: x.len() });
    }
    let hidden: Vec<f64> = params
        .w1()
        .chunks_exact(params.input_dim)
        .zip(params.b1())
        .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).max(0.0))
        .collect();
    let logit = hidden.iter().zip(params.w2()).map(|(h, w)| h * w).sum::<f64>() + params.b2();
    Ok((sigmoid(logit), ForwardCache { hidden, logit }))
}

/// Binary cross-entropy from the logit: `max(z,0) - z*y + ln(1 + e^-|z|)`.
pub fn bce_loss(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Mean loss and mean gradient over a batch of `(features, label)` pairs.
/// The gradient has the same layout as the parameters.
pub fn backward(params: &MlpParams, batch: &[(&[f64], f64)]) -> Result<(f64, MlpParams), ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let (d, h) = (params.input_dim, params.hidden);
    let mut grad = MlpParams::zeros(d, h);
    let mut loss = 0.0;
    for &(x, y) in batch {
        let (p, cache) = forward(params, x)?;
        loss += bce_loss(cache.logit, y);
        let dz = p - y;
        let w2 = params.w2().to_vec();
        let dhidden: Vec<f64> = cache.hidden.iter().zip(&w2).map(|(&a, &w)| if a > 0.0 { dz * w } else { 0.0 }).collect();
        for (row, &g) in grad.w1_mut().chunks_exact_mut(d).zip(&dhidden) {
            if g != 0.0 {
                row.iter_mut().zip(x).for_each(|(r, &xi)| *r += g * xi);
            }
        }
        grad.b1_mut().iter_mut().zip(&dhidden).for_each(|(b, g)| *b += g);
        grad.w2_mut().iter_mut().zip(&cache.hidden).for_each(|(w, a)| *w += dz * a);
        let b2 = grad.b2() + dz;
        grad.set_b2(b2);
    }
    let n = batch.len() as f64;
    grad.as_mut_slice().iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators mirroring a flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn for_params(params: &MlpParams, config: AdamConfig) -> Self {
        Self::new(params.as_slice().len(), config)
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(theta: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<(), ClassifierError> {
    if theta.len() != grads.len() || theta.len() != state.m.len() || state.v.len() != state.m.len() {
        return Err(ClassifierError::ShapeMismatch);
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    for (((p, &g), m), v) in theta.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}
