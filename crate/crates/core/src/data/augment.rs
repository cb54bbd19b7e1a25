//! Flip, shift and rotation augmentation with matching landmark transforms.

use rand::Rng;

use crate::data::image::GrayImage;
use crate::data::landmarks::{LandmarkSet, MIRROR_PAIRS};
use crate::data::sample::Sample;
use crate::error::{Error, Result};

/// Largest shift as a fraction of the image width or height.
pub const MAX_SHIFT_FRACTION: f64 = 0.30;
pub const MAX_ROTATION_DEGREES: f64 = 30.0;

/// Landmarks this close outside the frame are snapped onto its edge instead
/// of being dropped; absorbs rounding in the rotation.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    HFlip,
    VFlip,
    /// Moves content by `(dx, dy)` pixels.
    Shift {
        dx: f64,
        dy: f64,
    },
    /// Rotates about the frame center by `degrees`; positive turns the +x
    /// axis towards +y (clockwise on screen, where y points down).
    Rotate {
        degrees: f64,
    },
}

impl AugmentOp {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        match *self {
            AugmentOp::HFlip | AugmentOp::VFlip => Ok(()),
            AugmentOp::Shift { dx, dy } => {
                let (mx, my) = (MAX_SHIFT_FRACTION * width as f64, MAX_SHIFT_FRACTION * height as f64);
                if !(dx.is_finite() && dy.is_finite()) || dx.abs() > mx || dy.abs() > my {
                    return Err(Error::invalid(format!("shift ({dx}, {dy}) exceeds ({mx}, {my})")));
                }
                Ok(())
            }
            AugmentOp::Rotate { degrees } => {
                if !degrees.is_finite() || degrees.abs() > MAX_ROTATION_DEGREES {
                    return Err(Error::invalid(format!("rotation {degrees}° exceeds ±{MAX_ROTATION_DEGREES}°")));
                }
                Ok(())
            }
        }
    }

    /// Where a point at `(x, y)` lands in a `width × height` frame.
    pub fn map_point(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
        match *self {
            AugmentOp::HFlip => (mx - x, y),
            AugmentOp::VFlip => (x, my - y),
            AugmentOp::Shift { dx, dy } => (x + dx, y + dy),
            AugmentOp::Rotate { degrees } => rotate_about(x, y, mx / 2.0, my / 2.0, degrees.to_radians()),
        }
    }

    /// Inverse of [`AugmentOp::map_point`].
    pub fn unmap_point(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        match *self {
            AugmentOp::Shift { dx, dy } => (x - dx, y - dy),
            AugmentOp::Rotate { degrees } => AugmentOp::Rotate { degrees: -degrees }.map_point(x, y, width, height),
            flip => flip.map_point(x, y, width, height),
        }
    }
}

fn rotate_about(x: f64, y: f64, cx: f64, cy: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let (u, v) = (x - cx, y - cy);
    (cx + c * u - s * v, cy + s * u + c * v)
}

/// Resamples the image under `op`: bilinear, zero outside the source.
pub fn augment_image(image: &GrayImage, op: &AugmentOp) -> Result<GrayImage> {
    let (w, h) = (image.width(), image.height());
    op.validate(w, h)?;
    let mut out = GrayImage::filled(w, h, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = op.unmap_point(x as f64, y as f64, w, h);
            out.set(x, y, image.sample_bilinear(sx, sy));
        }
    }
    Ok(out)
}

/// Maps present landmarks under `op`. Points leaving the frame become
/// missing; a horizontal flip also swaps left/right names.
pub fn augment_landmarks(set: &LandmarkSet, op: &AugmentOp, width: usize, height: usize) -> Result<LandmarkSet> {
    op.validate(width, height)?;
    let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
    let mut out = LandmarkSet::missing();
    for (i, p) in set.points.iter().enumerate() {
        if let Some((x, y)) = p {
            let (nx, ny) = op.map_point(*x, *y, width, height);
            out.points[i] = match (snap(nx, mx), snap(ny, my)) {
                (Some(nx), Some(ny)) => Some((nx, ny)),
                _ => None,
            };
        }
    }
    if *op == AugmentOp::HFlip {
        for (a, b) in MIRROR_PAIRS {
            out.points.swap(a, b);
        }
    }
    Ok(out)
}

fn snap(v: f64, max: f64) -> Option<f64> {
    if (0.0..=max).contains(&v) {
        Some(v)
    } else if v >= -EDGE_SLACK && v <= max + EDGE_SLACK {
        Some(v.clamp(0.0, max))
    } else {
        None
    }
}

/// Applies one op to pixels and landmarks. The result is marked as augmented
/// from the original sample (or from the sample's own origin).
pub fn augment(sample: &Sample, op: &AugmentOp) -> Result<Sample> {
    let (w, h) = (sample.pixels.width(), sample.pixels.height());
    Ok(Sample {
        image_id: sample.image_id.clone(),
        pixels: augment_image(&sample.pixels, op)?,
        class_label: sample.class_label,
        gender: sample.gender,
        landmarks: augment_landmarks(&sample.landmarks, op, w, h)?,
        augmented_from: Some(sample.augmented_from.clone().unwrap_or_else(|| sample.image_id.clone())),
    })
}

/// Applies `ops` in order.
pub fn augment_chain(sample: &Sample, ops: &[AugmentOp]) -> Result<Sample> {
    let mut out = sample.clone();
    for op in ops {
        out = augment(&out, op)?;
    }
    if ops.is_empty() {
        out.augmented_from = Some(sample.augmented_from.clone().unwrap_or_else(|| sample.image_id.clone()));
    }
    Ok(out)
}

/// A random chain in the order flip, shift, rotate: a horizontal and/or
/// vertical flip, a horizontal and/or vertical whole-pixel shift within 30%
/// of the frame, then a rotation within ±30°.
pub fn random_chain(rng: &mut impl Rng, width: usize, height: usize) -> Vec<AugmentOp> {
    let mut ops = Vec::with_capacity(4);
    match rng.random_range(0..3) {
        0 => ops.push(AugmentOp::HFlip),
        1 => ops.push(AugmentOp::VFlip),
        _ => ops.extend([AugmentOp::HFlip, AugmentOp::VFlip]),
    }
    let max_dx = (MAX_SHIFT_FRACTION * width as f64).floor() as i64;
    let max_dy = (MAX_SHIFT_FRACTION * height as f64).floor() as i64;
    let axes = rng.random_range(0..3);
    let dx = if axes != 1 { rng.random_range(-max_dx..=max_dx) } else { 0 };
    let dy = if axes != 0 { rng.random_range(-max_dy..=max_dy) } else { 0 };
    ops.push(AugmentOp::Shift { dx: dx as f64, dy: dy as f64 });
    ops.push(AugmentOp::Rotate { degrees: rng.random_range(-MAX_ROTATION_DEGREES..=MAX_ROTATION_DEGREES) });
    ops
}
