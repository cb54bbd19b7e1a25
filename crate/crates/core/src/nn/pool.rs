//! Non-overlapping max pooling (stride == window, floor semantics).

use crate::error::{Error, Result};
use crate::nn::conv::dims4;
use crate::nn::Tensor;

/// Returns the pooled tensor and, per output element, the flat input index of
/// its maximum (first occurrence in row-major window order on ties).
pub(crate) fn maxpool2d_with_argmax(input: &Tensor, pool: (usize, usize)) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = dims4(input, "maxpool2d input")?;
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 {
        return Err(Error::invalid("pool shape must be positive"));
    }
    if h < ph || w < pw {
        return Err(Error::shape("maxpool2d", format!("{h}x{w} input is smaller than the {ph}x{pw} pool")));
    }
    let (oh, ow) = (h / ph, w / pw);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * ph * w + ox * pw;
                for i in 0..ph {
                    for j in 0..pw {
                        let idx = base + (oy * ph + i) * w + ox * pw + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_parts_unchecked(vec![n, c, oh, ow], out), argmax))
}

pub fn maxpool2d_forward(input: &Tensor, pool: (usize, usize)) -> Result<Tensor> {
    maxpool2d_with_argmax(input, pool).map(|(t, _)| t)
}

pub(crate) fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    dx
}
