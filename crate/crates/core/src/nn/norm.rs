//! Batch normalization over the channel axis (axis 1). For `[N, C, H, W]`
//! inputs statistics pool the batch and spatial axes; for `[N, D]` just the batch.

use crate::error::{Error, Result};
use crate::nn::{Mode, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    c: usize,
    spatial: usize,
}

impl Layout {
    fn of(input: &Tensor, channels: usize) -> Result<Self> {
        let shape = input.shape();
        if shape.len() < 2 {
            return Err(Error::shape("batchnorm", format!("need rank >= 2, got {shape:?}")));
        }
        if shape[1] != channels {
            return Err(Error::shape("batchnorm", format!("input has {} channels, layer has {channels}", shape[1])));
        }
        Ok(Layout { n: shape[0], c: shape[1], spatial: shape[2..].iter().product() })
    }

    fn count(&self) -> usize {
        self.n * self.spatial
    }

    fn for_channel(&self, ch: usize, mut f: impl FnMut(usize)) {
        for s in 0..self.n {
            let base = (s * self.c + ch) * self.spatial;
            for i in base..base + self.spatial {
                f(i);
            }
        }
    }
}

/// Values saved by a train- or infer-mode forward for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct BatchNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
}

pub(crate) fn batchnorm_forward_cached(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let channels = state.channels();
    let layout = Layout::of(input, channels)?;
    if gamma.shape() != [channels] || beta.shape() != [channels] {
        return Err(Error::shape("batchnorm", "gamma/beta must have one value per channel"));
    }
    if mode == Mode::Train && layout.n < 2 {
        return Err(Error::invalid("batch norm in train mode needs a batch of at least 2"));
    }
    let x = input.data();
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; channels];
    let m = layout.count() as f64;
    for ch in 0..channels {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0;
                layout.for_channel(ch, |i| sum += x[i]);
                let mean = sum / m;
                let mut sq = 0.0;
                layout.for_channel(ch, |i| sq += (x[i] - mean) * (x[i] - mean));
                let var = sq / m;
                state.running_mean[ch] = state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * mean;
                state.running_var[ch] = state.momentum * state.running_var[ch] + (1.0 - state.momentum) * var;
                (mean, var)
            }
            Mode::Infer => (state.running_mean[ch], state.running_var[ch]),
        };
        let istd = 1.0 / (var + state.eps).sqrt();
        inv_std[ch] = istd;
        layout.for_channel(ch, |i| xhat[i] = (x[i] - mean) * istd);
    }
    let mut y = vec![0.0; x.len()];
    for ch in 0..channels {
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        layout.for_channel(ch, |i| y[i] = g * xhat[i] + b);
    }
    Ok((Tensor::from_parts_unchecked(input.shape().to_vec(), y), BatchNormCache { xhat, inv_std, mode }))
}

/// Normalizes `input` per channel then applies `gamma * x + beta`. Train mode
/// uses batch statistics and updates `state`; infer mode reads `state` only.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<Tensor> {
    batchnorm_forward_cached(input, gamma, beta, state, mode).map(|(y, _)| y)
}

pub(crate) struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub(crate) fn batchnorm_backward(
    input_shape: &[usize],
    gamma: &Tensor,
    cache: &BatchNormCache,
    grad_out: &Tensor,
) -> BatchNormGrads {
    let channels = gamma.len();
    let n = input_shape[0];
    let spatial: usize = input_shape[2..].iter().product();
    let layout = Layout { n, c: channels, spatial };
    let m = layout.count() as f64;
    let dy = grad_out.data();
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for ch in 0..channels {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        layout.for_channel(ch, |i| {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * cache.xhat[i];
        });
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let g = gamma.data()[ch];
        let istd = cache.inv_std[ch];
        match cache.mode {
            Mode::Train => {
                let k = g * istd / m;
                layout.for_channel(ch, |i| {
                    dx[i] = k * (m * dy[i] - sum_dy - cache.xhat[i] * sum_dy_xhat);
                });
            }
            Mode::Infer => layout.for_channel(ch, |i| dx[i] = g * istd * dy[i]),
        }
    }
    BatchNormGrads { input: Tensor::from_parts_unchecked(input_shape.to_vec(), dx), gamma: dgamma, beta: dbeta }
}
