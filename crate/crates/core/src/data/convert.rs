//! Conversion of samples into network inputs.

use crate::data::landmarks::{LandmarkSet, MAX_COORD, NUM_POINTS};
use crate::data::sample::{Sample, Task};
use crate::error::{Error, Result};
use crate::models::{scale_coord, HcnnData, LandmarkData, NUM_LANDMARK_FEATURES};
use crate::nn::Tensor;

/// Per-column means of present training coordinates, used in place of
/// missing ones.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkImputer {
    pub means: [f64; NUM_LANDMARK_FEATURES],
}

impl LandmarkImputer {
    /// Columns with no present value fall back to the frame center.
    pub fn fit(samples: &[Sample]) -> Self {
        Self::fit_sets(samples.iter().map(|s| &s.landmarks))
    }

    pub fn fit_sets<'a>(sets: impl IntoIterator<Item = &'a LandmarkSet>) -> Self {
        let mut sums = [0.0; NUM_LANDMARK_FEATURES];
        let mut counts = [0usize; NUM_LANDMARK_FEATURES];
        for s in sets {
            for (c, v) in s.features().iter().enumerate() {
                if let Some(v) = v {
                    sums[c] += v;
                    counts[c] += 1;
                }
            }
        }
        let mut means = [MAX_COORD / 2.0; NUM_LANDMARK_FEATURES];
        for c in 0..NUM_LANDMARK_FEATURES {
            if counts[c] > 0 {
                means[c] = sums[c] / counts[c] as f64;
            }
        }
        LandmarkImputer { means }
    }

    pub fn impute(&self, set: &LandmarkSet) -> [f64; NUM_LANDMARK_FEATURES] {
        let mut out = self.means;
        for (c, v) in set.features().iter().enumerate() {
            if let Some(v) = v {
                out[c] = *v;
            }
        }
        out
    }

    pub fn to_config_value(&self) -> String {
        self.means.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn from_config_value(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad imputer value `{v}`"))))
            .collect::<Result<_>>()?;
        let means = values.try_into().map_err(|v: Vec<f64>| {
            Error::Format(format!("imputer needs {NUM_LANDMARK_FEATURES} values, got {}", v.len()))
        })?;
        Ok(LandmarkImputer { means })
    }
}

fn pixel_tensor(samples: &[Sample]) -> Result<Tensor> {
    let first = samples.first().ok_or_else(|| Error::Empty("no samples".into()))?;
    let (w, h) = (first.pixels.width(), first.pixels.height());
    if w != h {
        return Err(Error::invalid(format!("network inputs must be square, got {w}x{h}")));
    }
    let mut data = Vec::with_capacity(samples.len() * w * h);
    for s in samples {
        if (s.pixels.width(), s.pixels.height()) != (w, h) {
            return Err(Error::invalid(format!("sample `{}` is not {w}x{h}", s.image_id)));
        }
        data.extend_from_slice(s.pixels.data());
    }
    Tensor::new(&[samples.len(), 1, h, w], data)
}

/// Pixels, imputed and scaled landmarks, and the labels for `task`.
pub fn to_hcnn_data(samples: &[Sample], task: Task, imputer: &LandmarkImputer) -> Result<HcnnData> {
    let pixels = pixel_tensor(samples)?;
    let landmarks = samples.iter().flat_map(|s| imputer.impute(&s.landmarks).map(scale_coord)).collect();
    let landmarks = Tensor::new(&[samples.len(), NUM_LANDMARK_FEATURES], landmarks)?;
    HcnnData::new(pixels, landmarks, samples.iter().map(|s| s.label(task)).collect())
}

/// Regression targets with a presence mask; samples without any landmark are dropped.
pub fn to_landmark_data(samples: &[Sample]) -> Result<LandmarkData> {
    let pixels = pixel_tensor(samples)?;
    let mut targets = Vec::with_capacity(samples.len() * NUM_LANDMARK_FEATURES);
    let mut mask = Vec::with_capacity(targets.capacity());
    for s in samples {
        for v in s.landmarks.features() {
            targets.push(v.map_or(0.0, scale_coord));
            mask.push(if v.is_some() { 1.0 } else { 0.0 });
        }
    }
    let shape = [samples.len(), 2 * NUM_POINTS];
    LandmarkData::new(pixels, Tensor::new(&shape, targets)?, Tensor::new(&shape, mask)?)
}
