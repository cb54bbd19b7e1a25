use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Mode, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    input.map(|x| if x >= 0.0 { x } else { slope * x })
}

pub(crate) fn leaky_relu_backward(input: &Tensor, slope: f64, grad_out: &Tensor) -> Tensor {
    let data = input.data().iter().zip(grad_out.data()).map(|(&x, &g)| if x >= 0.0 { g } else { slope * g }).collect();
    Tensor::from_parts_unchecked(input.shape().to_vec(), data)
}

/// Row-wise softmax of a `[N, K]` tensor with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::shape("softmax", format!("expected [N, K], got {:?}", logits.shape())));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("softmax logits"));
    }
    let k = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Ok(Tensor::from_parts_unchecked(logits.shape().to_vec(), out))
}

pub(crate) fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let k = probs.shape()[1];
    let mut dx = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks(k).zip(grad_out.data().chunks(k)) {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        dx.extend(p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)));
    }
    Tensor::from_parts_unchecked(probs.shape().to_vec(), dx)
}

/// Inverted-dropout keep mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale }).collect()
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

pub fn dropout(input: &Tensor, rate: f64, mode: Mode, seed: u64) -> Result<Tensor> {
    check_dropout_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.len(), rate, seed);
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_parts_unchecked(input.shape().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::new(&[3], vec![5.0, -10.0, 0.0]).unwrap();
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.data()[0], 5.0);
        assert!((y.data()[1] + 0.1).abs() < 1e-15);
        assert_eq!(y.data()[2], 0.0);
    }

    #[test]
    fn leaky_relu_gradient_matches_central_difference() {
        let h = 1e-5;
        for x0 in [0.5, -0.5] {
            let f = |x: f64| leaky_relu(&Tensor::scalar(x), 0.01).data()[0];
            let numeric = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
            let analytic = leaky_relu_backward(&Tensor::scalar(x0), 0.01, &Tensor::scalar(1.0)).data()[0];
            assert!((numeric - analytic).abs() <= 1e-6);
        }
        let at_zero = leaky_relu_backward(&Tensor::scalar(0.0), 0.01, &Tensor::scalar(1.0)).data()[0];
        assert_eq!(at_zero, 1.0);
    }

    #[test]
    fn dropout_rate_zero_and_infer_are_identity() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(dropout(&x, 0.0, Mode::Train, 1).unwrap(), x);
        assert_eq!(dropout(&x, 0.7, Mode::Infer, 1).unwrap(), x);
    }

    #[test]
    fn dropout_keeps_about_half() {
        let x = Tensor::filled(&[10_000], 1.0);
        let y = dropout(&x, 0.5, Mode::Train, 42).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&kept), "kept {kept}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_rate_one_rejected() {
        assert!(dropout(&Tensor::zeros(&[3]), 1.0, Mode::Train, 0).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -500.0, 0.0, 500.0]).unwrap();
        let p = softmax(&x).unwrap();
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
