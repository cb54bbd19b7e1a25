//! Landmark localization error.

use crate::data::landmarks::{LandmarkSet, LandmarkTable};
use crate::error::{Error, Result};

/// Root mean squared error in pixels over every coordinate present in the
/// truth. The prediction must supply each of those coordinates; whatever it
/// holds elsewhere is ignored.
pub fn landmark_rmse(predicted: &[LandmarkSet], truth: &[LandmarkSet]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!("{} predictions vs {} truths", predicted.len(), truth.len())));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (p, t)) in predicted.iter().zip(truth).enumerate() {
        let pf = p.features();
        for (c, tv) in t.features().iter().enumerate() {
            if let Some(tv) = tv {
                let pv = pf[c].ok_or_else(|| Error::invalid(format!("prediction {i} lacks coordinate {c}")))?;
                sum += (pv - tv) * (pv - tv);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("no present ground-truth coordinate".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// [`landmark_rmse`] over the truth rows, matched to predictions by image id.
pub fn landmark_rmse_tables(predicted: &LandmarkTable, truth: &LandmarkTable) -> Result<f64> {
    let mut p = Vec::with_capacity(truth.len());
    let mut t = Vec::with_capacity(truth.len());
    for (id, set) in truth.rows() {
        let pred = predicted.get(id).ok_or_else(|| Error::invalid(format!("no prediction for `{id}`")))?;
        p.push(*pred);
        t.push(*set);
    }
    landmark_rmse(&p, &t)
}
