//! Per-channel batch normalization over (N, H, W).

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running value in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize by batch statistics and update running averages.
    Train,
    /// Normalize by running averages.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    /// Zero mean, unit variance.
    pub fn identity(channels: usize) -> Self {
        RunningStats { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }

    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        for c in 0..self.mean.len() {
            self.mean[c] = T::of(momentum * self.mean[c].f64() + (1.0 - momentum) * batch.mean[c]);
            self.var[c] = T::of(momentum * self.var[c].f64() + (1.0 - momentum) * batch.unbiased_var[c]);
        }
    }
}

/// Statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<f64>,
}

fn check_affine<T: Scalar>(input: &Tensor<T>, gamma: &[T], beta: &[T]) -> Result<()> {
    let c = input.channels();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(
            "batchnorm",
            format!("{c} channels but gamma/beta have {}/{} entries", gamma.len(), beta.len()),
        ));
    }
    Ok(())
}

fn for_each_channel<T: Scalar>(t: &Tensor<T>, c: usize, mut f: impl FnMut(&T)) {
    let [n, ch, h, w] = t.shape();
    let plane = h * w;
    for s in 0..n {
        t.data()[(s * ch + c) * plane..(s * ch + c + 1) * plane].iter().for_each(&mut f);
    }
}

fn normalize<T: Scalar>(input: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> Tensor<T> {
    let [_, ch, h, w] = input.shape();
    let plane = h * w;
    Tensor::from_fn(input.shape(), |i| {
        let c = (i / plane) % ch;
        T::of((input.data()[i].f64() - mean[c]) * inv_std[c])
    })
}

fn affine<T: Scalar>(x_hat: &Tensor<T>, gamma: &[T], beta: &[T]) -> Tensor<T> {
    let [_, ch, h, w] = x_hat.shape();
    let plane = h * w;
    Tensor::from_fn(x_hat.shape(), |i| {
        let c = (i / plane) % ch;
        gamma[c] * x_hat.data()[i] + beta[c]
    })
}

pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
) -> Result<(Tensor<T>, BatchNormCache<T>, BatchStats)> {
    check_affine(input, gamma, beta)?;
    let [n, ch, h, w] = input.shape();
    let count = (n * h * w) as f64;
    let mut mean = vec![0.0; ch];
    let mut var = vec![0.0; ch];
    for c in 0..ch {
        let mut s = 0.0;
        for_each_channel(input, c, |v| s += v.f64());
        let m = s / count;
        let mut ss = 0.0;
        for_each_channel(input, c, |v| ss += (v.f64() - m).powi(2));
        mean[c] = m;
        var[c] = ss / count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let x_hat = normalize(input, &mean, &inv_std);
    let out = affine(&x_hat, gamma, beta);
    let unbiased_var = var.iter().map(|v| if count > 1.0 { v * count / (count - 1.0) } else { *v }).collect();
    Ok((out, BatchNormCache { x_hat, inv_std }, BatchStats { mean, var, unbiased_var }))
}

pub fn batchnorm_eval<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    stats: Option<&RunningStats<T>>,
) -> Result<Tensor<T>> {
    check_affine(input, gamma, beta)?;
    let stats = stats.ok_or(Error::BatchNormNoStats)?;
    if stats.mean.len() != input.channels() {
        return Err(Error::shape("batchnorm_eval", "running statistics do not match channel count"));
    }
    let mean: Vec<f64> = stats.mean.iter().map(|v| v.f64()).collect();
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v.f64() + BN_EPS).sqrt()).collect();
    Ok(affine(&normalize(input, &mean, &inv_std), gamma, beta))
}

/// Returns `(d_input, d_gamma, d_beta)` for a training-mode forward.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    super::tensor::same_shape("batchnorm_backward", &cache.x_hat, d_out)?;
    let [n, ch, h, w] = d_out.shape();
    let plane = h * w;
    let count = (n * h * w) as f64;
    let mut sum_dy = vec![0.0; ch];
    let mut sum_dy_xhat = vec![0.0; ch];
    for s in 0..n {
        for c in 0..ch {
            let range = (s * ch + c) * plane..(s * ch + c + 1) * plane;
            for (dy, xh) in d_out.data()[range.clone()].iter().zip(&cache.x_hat.data()[range]) {
                sum_dy[c] += dy.f64();
                sum_dy_xhat[c] += dy.f64() * xh.f64();
            }
        }
    }
    let d_input = Tensor::from_fn(d_out.shape(), |i| {
        let c = (i / plane) % ch;
        let dy = d_out.data()[i].f64();
        let xh = cache.x_hat.data()[i].f64();
        let k = gamma[c].f64() * cache.inv_std[c] / count;
        T::of(k * (count * dy - sum_dy[c] - xh * sum_dy_xhat[c]))
    });
    Ok((d_input, sum_dy_xhat.into_iter().map(T::of).collect(), sum_dy.into_iter().map(T::of).collect()))
}

/// Self-contained layer: affine parameters plus running statistics.
///
/// A freshly created layer has no running statistics, so evaluation before
/// the first training step is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub stats: Option<RunningStats<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm { gamma: vec![T::one(); channels], beta: vec![T::zero(); channels], stats: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
        match mode {
            Mode::Eval => Ok((batchnorm_eval(input, &self.gamma, &self.beta, self.stats.as_ref())?, None)),
            Mode::Train => {
                let (out, cache, batch) = batchnorm_train(input, &self.gamma, &self.beta)?;
                self.stats.get_or_insert_with(|| RunningStats::identity(input.channels())).update(&batch, BN_MOMENTUM);
                Ok((out, Some(cache)))
            }
        }
    }
}
