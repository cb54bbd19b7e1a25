//! Binary portable graymap (P5) and pixmap (P6) files.

use std::fs;
use std::path::Path;

use crate::data::image::{GrayImage, RgbImage};
use crate::error::{Error, Result};

/// Decoded image of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Pnm {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Pnm {
    /// Grayscale view on the 0..=255 scale.
    pub fn into_gray(self) -> Result<GrayImage> {
        match self {
            Pnm::Gray(g) => Ok(g),
            Pnm::Rgb(c) => c.to_gray(),
        }
    }
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Pnm> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_pnm(&bytes).map_err(|e| Error::parse(path, 1, e))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> std::result::Result<&str, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("truncated header".into());
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| "non-ASCII header".to_string())
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        let t = self.token()?;
        t.parse().map_err(|_| format!("bad {what} `{t}`"))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Pnm, String> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?.to_string();
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported magic `{other}` (expected P5 or P6)")),
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-area image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} unsupported (8-bit only)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    h.pos += 1;
    let need = width * height * channels;
    let raster = bytes.get(h.pos..h.pos + need).ok_or_else(|| format!("raster truncated: need {need} bytes"))?;
    let rescale = 255.0 / maxval as f64;
    if channels == 1 {
        let data = raster.iter().map(|&b| f64::from(b) * rescale).collect();
        Ok(Pnm::Gray(GrayImage::new(width, height, data).map_err(|e| e.to_string())?))
    } else {
        let data = raster
            .chunks_exact(3)
            .map(|c| {
                let s = |v: u8| (f64::from(v) * rescale).round().min(255.0) as u8;
                [s(c[0]), s(c[1]), s(c[2])]
            })
            .collect();
        Ok(Pnm::Rgb(RgbImage { width, height, data }))
    }
}

/// Encodes a `[0, 1]` image as 8-bit P5.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_round_trip() {
        let img = GrayImage::new(3, 2, vec![0.0, 0.5, 1.0, 0.2, 0.4, 0.6]).unwrap();
        let Pnm::Gray(back) = decode_pnm(&encode_pgm(&img)).unwrap() else { panic!() };
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a / 255.0 - b).abs() <= 0.5 / 255.0);
        }
    }

    #[test]
    fn p6_with_comment_converts_to_gray() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend([255, 255, 255]);
        let g = decode_pnm(&bytes).unwrap().into_gray().unwrap();
        assert!((g.data()[0] - 255.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_and_unknown_rejected() {
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00\x01").is_err());
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
