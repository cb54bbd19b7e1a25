//! Bounding-box records: `image_id x y w h [x y w h …]`, one image per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Axis-aligned box with top-left corner `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) || w < 0.0 || h < 0.0 {
            return Err(Error::invalid(format!("invalid box ({x}, {y}, {w}, {h})")));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Boxes per image, ordered by image id. An image may have no boxes.
pub type BoxFile = BTreeMap<String, Vec<BBox>>;

pub fn load_boxes(path: impl AsRef<Path>) -> Result<BoxFile> {
    let path = path.as_ref();
    parse_boxes(&fs::read_to_string(path)?, path)
}

pub fn parse_boxes(text: &str, source: impl AsRef<Path>) -> Result<BoxFile> {
    let source = source.as_ref();
    let mut out = BoxFile::new();
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let nums = fields
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(source, row, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() % 4 != 0 {
            return Err(Error::parse(source, row, format!("{} numbers do not form whole boxes", nums.len())));
        }
        let boxes = nums
            .chunks_exact(4)
            .map(|c| BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::parse(source, row, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if out.insert(id.to_string(), boxes).is_some() {
            return Err(Error::parse(source, row, format!("duplicate image `{id}`")));
        }
    }
    Ok(out)
}

pub fn format_boxes(boxes: &BoxFile) -> String {
    let mut out = String::new();
    for (id, list) in boxes {
        out.push_str(id);
        for b in list {
            let _ = write!(out, " {} {} {} {}", b.x, b.y, b.w, b.h);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let text = "a 1 2 3 4 5 6 7 8\nb\nc 0.5 0 10 10\n";
        let b = parse_boxes(text, "b.txt").unwrap();
        assert_eq!(b["a"].len(), 2);
        assert!(b["b"].is_empty());
        assert_eq!(parse_boxes(&format_boxes(&b), "b").unwrap(), b);
    }

    #[test]
    fn malformed_records_rejected() {
        assert!(parse_boxes("a 1 2 3\n", "b").is_err());
        assert!(parse_boxes("a 1 2 3 x\n", "b").is_err());
        assert!(parse_boxes("a 1 2 -3 4\n", "b").is_err());
        assert!(parse_boxes("a\na\n", "b").is_err());
    }
}
