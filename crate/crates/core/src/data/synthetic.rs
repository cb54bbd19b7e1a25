//! Small synthetic face-like dataset whose classes differ in landmark layout.
//!
//! Each class moves the eyes apart and the mouth down by a fixed step; every
//! sample jitters the points and renders them as bright spots over noise, so
//! both the pixels and the landmark features carry the class.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::GrayImage;
use crate::data::landmarks::{LandmarkSet, NUM_POINTS};
use crate::data::sample::{Dataset, Gender, Sample};
use crate::error::{Error, Result};
use crate::seed::stream;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    /// Standard deviation of the per-point jitter, in pixels.
    pub jitter: f64,
    /// Probability that a point is left missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { classes: 3, per_class: 20, size: 96, jitter: 1.5, missing_rate: 0.0, seed: 0 }
    }
}

/// Canonical points in a 96-wide frame, in landmark order.
const TEMPLATE: [(f64, f64); NUM_POINTS] = [
    (34.0, 36.0),
    (62.0, 36.0),
    (40.0, 36.0),
    (28.0, 36.0),
    (56.0, 36.0),
    (68.0, 36.0),
    (40.0, 28.0),
    (26.0, 28.0),
    (56.0, 28.0),
    (70.0, 28.0),
    (48.0, 52.0),
    (38.0, 66.0),
    (58.0, 66.0),
    (48.0, 63.0),
    (48.0, 70.0),
];

fn class_layout(class: usize, classes: usize, size: usize) -> [(f64, f64); NUM_POINTS] {
    let scale = size as f64 / 96.0;
    let step = class as f64 - (classes as f64 - 1.0) / 2.0;
    let mut pts = TEMPLATE;
    for (i, p) in pts.iter_mut().enumerate() {
        let spread = match i {
            0..=10 if p.0 < 48.0 => -3.0,
            0..=10 if p.0 > 48.0 => 3.0,
            _ => 0.0,
        };
        let drop = if i >= 11 { 3.0 } else { 0.0 };
        *p = ((p.0 + spread * step) * scale, (p.1 + drop * step) * scale);
    }
    pts
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.size < 16 {
        return Err(Error::invalid("synthetic dataset needs classes, samples and a frame of at least 16 px"));
    }
    if !(0.0..1.0).contains(&cfg.missing_rate) || !(cfg.jitter >= 0.0) {
        return Err(Error::invalid("missing rate must be in [0, 1) and jitter non-negative"));
    }
    let max = (cfg.size - 1) as f64;
    let jitter = Normal::new(0.0, cfg.jitter).map_err(|e| Error::invalid(e.to_string()))?;
    let spot_sigma = 1.5 * cfg.size as f64 / 96.0;
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for k in 0..cfg.per_class {
        for c in 0..cfg.classes {
            let id = format!("syn_c{c}_{k:03}");
            let mut rng = stream(cfg.seed, &id, 0);
            let layout = class_layout(c, cfg.classes, cfg.size);
            let mut set = LandmarkSet::missing();
            let mut spots = Vec::with_capacity(NUM_POINTS);
            for (i, &(x, y)) in layout.iter().enumerate() {
                let p = ((x + jitter.sample(&mut rng)).clamp(0.0, max), (y + jitter.sample(&mut rng)).clamp(0.0, max));
                spots.push(p);
                if rng.random::<f64>() >= cfg.missing_rate {
                    set.points[i] = Some(p);
                }
            }
            let mut pixels = GrayImage::filled(cfg.size, cfg.size, 0.0)?;
            for y in 0..cfg.size {
                for x in 0..cfg.size {
                    let mut v = 0.15 * rng.random::<f64>();
                    for &(px, py) in &spots {
                        let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                        v += 0.8 * (-d2 / (2.0 * spot_sigma * spot_sigma)).exp();
                    }
                    pixels.set(x, y, v.min(1.0));
                }
            }
            samples.push(Sample {
                image_id: id,
                pixels,
                class_label: c,
                gender: if (c + k) % 2 == 0 { Gender::Male } else { Gender::Female },
                landmarks: set,
                augmented_from: None,
            });
        }
    }
    Dataset::new((0..cfg.classes).map(|c| format!("class{c}")).collect(), samples)
}
