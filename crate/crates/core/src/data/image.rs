//! Grayscale images, luminance conversion and aspect-preserving normalization.

use crate::error::{Error, Result};

/// Side of the normalized square frame.
pub const NORMALIZED_SIZE: usize = 96;

/// Row-major single-channel image. Raw images hold 0..=255 intensities,
/// normalized ones hold `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("zero-area image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a real position; positions outside the pixel grid
    /// read as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let at = |xi: f64, yi: f64| -> f64 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else {
                self.get(xi as usize, yi as usize)
            }
        };
        let row = |yi: f64| {
            let a = at(x0, yi);
            if fx == 0.0 {
                a
            } else {
                a + fx * (at(x0 + 1.0, yi) - a)
            }
        };
        let top = row(y0);
        if fy == 0.0 {
            top
        } else {
            top + fy * (row(y0 + 1.0) - top)
        }
    }
}

/// 8-bit RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Luminance `0.299 R + 0.587 G + 0.114 B`, on the 0..=255 scale.
    pub fn to_gray(&self) -> Result<GrayImage> {
        let data = self
            .data
            .iter()
            .map(|&[r, g, b]| 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
            .collect();
        GrayImage::new(self.width, self.height, data)
    }
}

/// A normalized image plus the placement of the original content inside the
/// square frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub image: GrayImage,
    /// Content size inside the frame.
    pub content_width: usize,
    pub content_height: usize,
    /// Zero padding to the left of and above the content.
    pub offset_x: usize,
    pub offset_y: usize,
    /// Per-axis scale from source to content pixels.
    pub scale_x: f64,
    pub scale_y: f64,
}

impl Normalized {
    /// Maps a source-image coordinate (pixel centers at integers) into the
    /// normalized frame.
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        ((x + 0.5) * self.scale_x - 0.5 + self.offset_x as f64, (y + 0.5) * self.scale_y - 0.5 + self.offset_y as f64)
    }

    /// Inverse of [`Normalized::map_point`].
    pub fn unmap_point(&self, x: f64, y: f64) -> (f64, f64) {
        ((x + 0.5 - self.offset_x as f64) / self.scale_x - 0.5, (y + 0.5 - self.offset_y as f64) / self.scale_y - 0.5)
    }
}

/// Scales the longest side of a 0..=255 image to `size` with bilinear
/// interpolation, centers it on a zero canvas and divides by 255.
pub fn normalize_image(raw: &GrayImage, size: usize) -> Result<Normalized> {
    if size == 0 {
        return Err(Error::invalid("normalized size must be positive"));
    }
    let (w, h) = (raw.width, raw.height);
    let longest = w.max(h) as f64;
    let cw = ((w as f64 * size as f64 / longest).round() as usize).clamp(1, size);
    let ch = ((h as f64 * size as f64 / longest).round() as usize).clamp(1, size);
    let scale_x = cw as f64 / w as f64;
    let scale_y = ch as f64 / h as f64;
    let offset_x = (size - cw) / 2;
    let offset_y = (size - ch) / 2;

    let mut image = GrayImage::filled(size, size, 0.0)?;
    for cy in 0..ch {
        // Clamp to the edge so content borders are not darkened by the zero fill.
        let sy = ((cy as f64 + 0.5) / scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        for cx in 0..cw {
            let sx = ((cx as f64 + 0.5) / scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let v = raw.sample_bilinear(sx, sy) / 255.0;
            image.set(cx + offset_x, cy + offset_y, v.clamp(0.0, 1.0));
        }
    }
    Ok(Normalized { image, content_width: cw, content_height: ch, offset_x, offset_y, scale_x, scale_y })
}
