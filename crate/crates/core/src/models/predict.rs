use crate::error::{Error, Result};
use crate::models::hcnn::Hcnn;
use crate::models::train::HcnnData;
use crate::nn::{softmax, Graph, Mode, Tensor};

/// Classes of one sample, most probable first.
pub type Ranking = Vec<(usize, f64)>;

/// Top-`k` classes of one probability row: descending probability, ties by
/// ascending class index.
pub fn rank_row(probs: &[f64], k: usize) -> Result<Ranking> {
    if k == 0 || k > probs.len() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", probs.len())));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(order.into_iter().take(k).map(|c| (c, probs[c])).collect())
}

/// Main-head probabilities in infer mode, `[N, classes]`.
pub fn predict_proba(model: &Hcnn, pixels: &Tensor, landmarks: &Tensor) -> Result<Tensor> {
    let n = pixels.batch();
    let k = model.config().num_classes;
    let mut out = Vec::with_capacity(n * k);
    for start in (0..n).step_by(64) {
        let idx: Vec<usize> = (start..(start + 64).min(n)).collect();
        let mut g = Graph::new(Mode::Infer, 0);
        let px = g.input(pixels.select_rows(&idx))?;
        let lm = g.input(landmarks.select_rows(&idx))?;
        let fwd = model.forward_infer(&mut g, px, lm)?;
        out.extend_from_slice(softmax(g.value(fwd.main_logits))?.data());
    }
    Tensor::new(&[n, k], out)
}

/// Ranked top-`k` class list per sample.
pub fn predict(model: &Hcnn, data: &HcnnData, k: usize) -> Result<Vec<Ranking>> {
    if k == 0 || k > model.config().num_classes {
        return Err(Error::invalid(format!("k = {k} exceeds the {} classes", model.config().num_classes)));
    }
    let probs = predict_proba(model, &data.pixels, &data.landmarks)?;
    (0..data.len()).map(|i| rank_row(probs.row(i), k)).collect()
}
