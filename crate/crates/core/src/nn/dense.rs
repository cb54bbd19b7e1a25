use crate::error::{Error, Result};
use crate::nn::activation::{leaky_relu, softmax, DEFAULT_LEAKY_SLOPE};
use crate::nn::linalg::gemm;
use crate::nn::Tensor;

/// Activation applied after a dense layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
    Softmax,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)
    }
}

pub(crate) fn check_dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, d) = match *input.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::shape("dense", format!("input must be [N, D], got {:?}", input.shape()))),
    };
    let (wd, k) = match *weight.shape() {
        [wd, k] => (wd, k),
        _ => return Err(Error::shape("dense", format!("weight must be [D, K], got {:?}", weight.shape()))),
    };
    if wd != d {
        return Err(Error::shape("dense", format!("input width {d} does not match weight rows {wd}")));
    }
    if bias.shape() != [k] {
        return Err(Error::shape("dense", format!("bias {:?} for width {k}", bias.shape())));
    }
    Ok((n, d, k))
}

/// `input · weight + bias` for `[N, D] x [D, K]`.
pub(crate) fn affine(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d, k) = check_dense(input, weight, bias)?;
    let mut out = Vec::with_capacity(n * k);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, d, k, input.data(), false, weight.data(), false, 1.0, &mut out);
    Ok(Tensor::from_parts_unchecked(vec![n, k], out))
}

pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    let z = affine(input, weight, bias)?;
    match activation {
        Activation::Linear => Ok(z),
        Activation::LeakyRelu(slope) => Ok(leaky_relu(&z, slope)),
        Activation::Softmax => softmax(&z),
    }
}

pub(crate) struct DenseGrads {
    pub input: Tensor,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn affine_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> DenseGrads {
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let k = weight.shape()[1];
    let dy = grad_out.data();
    let mut dx = vec![0.0; n * d];
    gemm(n, k, d, dy, false, weight.data(), true, 0.0, &mut dx);
    let mut dw = vec![0.0; d * k];
    gemm(d, n, k, input.data(), true, dy, false, 0.0, &mut dw);
    let mut db = vec![0.0; k];
    for row in dy.chunks(k) {
        for (b, g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    DenseGrads { input: Tensor::from_parts_unchecked(vec![n, d], dx), weight: dw, bias: db }
}
