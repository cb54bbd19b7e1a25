use crate::error::{Error, Result};
use crate::nn::activation::softmax;
use crate::nn::Tensor;

/// Mean categorical cross-entropy over the batch. Returns the loss and the
/// softmax probabilities; the gradient w.r.t. the logits is `(p - y) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() || logits.rank() != 2 {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    let k = logits.shape()[1];
    for (i, row) in targets.data().chunks(k).enumerate() {
        if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("target row {i} does not sum to 1")));
        }
    }
    let probs = softmax(logits)?;
    let n = logits.batch() as f64;
    let mut loss = 0.0;
    for (z, y) in logits.data().chunks(k).zip(targets.data().chunks(k)) {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss -= z.iter().zip(y).map(|(&zi, &yi)| if yi == 0.0 { 0.0 } else { yi * (zi - lse) }).sum::<f64>();
    }
    Ok((loss / n, probs))
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::Empty("one_hot labels".into()));
    }
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        t.data_mut()[i * classes + l] = 1.0;
    }
    Ok(t)
}

/// Mean squared error over entries whose mask is non-zero.
pub fn masked_mse(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::shape("masked_mse", "prediction, target and mask must share a shape"));
    }
    let count = mask.data().iter().filter(|&&m| m != 0.0).count();
    if count == 0 {
        return Err(Error::Empty("masked_mse: every entry is masked".into()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .zip(mask.data())
        .filter(|(_, &m)| m != 0.0)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    Ok(sum / count as f64)
}
