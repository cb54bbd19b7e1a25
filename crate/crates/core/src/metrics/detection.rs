//! Image-level detection rates with IoU matching.

use log::warn;

use crate::data::boxes::{BBox, BoxFile};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::invalid("IoU needs boxes with positive width and height"));
    }
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    Ok(inter / (a.area() + b.area() - inter))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// At least one face found and no stray box.
    TruePositive,
    /// Some predicted box matches no face.
    FalsePositive,
    /// No prediction matched and none was stray.
    FalseNegative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionOutcome {
    pub verdict: Verdict,
    /// `(truth index, prediction index)` pairs.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_predictions: Vec<usize>,
}

/// Greedy matching, highest IoU first; each box is used at most once and a
/// pair needs IoU ≥ `threshold`. Ties keep the lower truth index, then the
/// lower prediction index.
pub fn match_image(truth: &[BBox], predicted: &[BBox], threshold: f64) -> Result<DetectionOutcome> {
    let mut pairs = Vec::new();
    for (t, tb) in truth.iter().enumerate() {
        for (p, pb) in predicted.iter().enumerate() {
            let v = iou(tb, pb)?;
            if v >= threshold {
                pairs.push((v, t, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; truth.len()];
    let mut pred_used = vec![false; predicted.len()];
    let mut matched = Vec::new();
    for (_, t, p) in pairs {
        if !truth_used[t] && !pred_used[p] {
            truth_used[t] = true;
            pred_used[p] = true;
            matched.push((t, p));
        }
    }
    let unmatched_truth: Vec<usize> = (0..truth.len()).filter(|&t| !truth_used[t]).collect();
    let unmatched_predictions: Vec<usize> = (0..predicted.len()).filter(|&p| !pred_used[p]).collect();
    let verdict = if !unmatched_predictions.is_empty() {
        Verdict::FalsePositive
    } else if !matched.is_empty() {
        Verdict::TruePositive
    } else {
        Verdict::FalseNegative
    };
    Ok(DetectionOutcome { verdict, matched, unmatched_truth, unmatched_predictions })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRates {
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub images: usize,
}

/// Verdict fractions over images with at least one ground-truth face; images
/// missing from `predicted` count as having no detections.
pub fn detection_rates(truth: &BoxFile, predicted: &BoxFile, threshold: f64) -> Result<DetectionRates> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("IoU threshold {threshold} outside [0, 1]")));
    }
    let none = Vec::new();
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (id, gt) in truth {
        if gt.is_empty() {
            warn!("image `{id}` has no ground-truth face; excluded");
            continue;
        }
        match match_image(gt, predicted.get(id).unwrap_or(&none), threshold)?.verdict {
            Verdict::TruePositive => tp += 1,
            Verdict::FalsePositive => fp += 1,
            Verdict::FalseNegative => fneg += 1,
        }
    }
    for id in predicted.keys().filter(|id| !truth.contains_key(*id)) {
        warn!("predictions for `{id}` have no ground truth; ignored");
    }
    let n = tp + fp + fneg;
    if n == 0 {
        return Err(Error::Empty("no image with a ground-truth face".into()));
    }
    let n_f = n as f64;
    Ok(DetectionRates { tpr: tp as f64 / n_f, fpr: fp as f64 / n_f, fnr: fneg as f64 / n_f, images: n })
}
