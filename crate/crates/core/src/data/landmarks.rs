//! The 15-point landmark canon and the comma-separated landmark table.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::image::NORMALIZED_SIZE;
use crate::error::{Error, Result};

pub const NUM_POINTS: usize = 15;

/// Point order shared by the table format, the networks and the annotator.
pub const LANDMARK_NAMES: [&str; NUM_POINTS] = [
    "left_eye_center",
    "right_eye_center",
    "left_eye_inner_corner",
    "left_eye_outer_corner",
    "right_eye_inner_corner",
    "right_eye_outer_corner",
    "left_eyebrow_inner_end",
    "left_eyebrow_outer_end",
    "right_eyebrow_inner_end",
    "right_eyebrow_outer_end",
    "nose_tip",
    "mouth_left_corner",
    "mouth_right_corner",
    "mouth_center_top_lip",
    "mouth_center_bottom_lip",
];

/// Index pairs exchanged by a horizontal flip.
pub const MIRROR_PAIRS: [(usize, usize); 6] = [(0, 1), (2, 4), (3, 5), (6, 8), (7, 9), (11, 12)];

/// Largest valid coordinate in the normalized frame.
pub const MAX_COORD: f64 = (NORMALIZED_SIZE - 1) as f64;

/// One image's landmarks; `None` marks a missing point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LandmarkSet {
    pub points: [Option<(f64, f64)>; NUM_POINTS],
}

impl LandmarkSet {
    pub fn missing() -> Self {
        LandmarkSet::default()
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().flatten().count()
    }

    /// The 30 coordinates `x0, y0, x1, y1, …`, `None` where missing.
    pub fn features(&self) -> [Option<f64>; 2 * NUM_POINTS] {
        let mut out = [None; 2 * NUM_POINTS];
        for (i, p) in self.points.iter().enumerate() {
            if let Some((x, y)) = p {
                out[2 * i] = Some(*x);
                out[2 * i + 1] = Some(*y);
            }
        }
        out
    }

    /// Builds a set from 30 coordinates; a point is present only when both of
    /// its coordinates are.
    pub fn from_features(values: &[Option<f64>]) -> Result<Self> {
        if values.len() != 2 * NUM_POINTS {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", 2 * NUM_POINTS, values.len())));
        }
        let mut set = LandmarkSet::missing();
        for i in 0..NUM_POINTS {
            if let (Some(x), Some(y)) = (values[2 * i], values[2 * i + 1]) {
                set.points[i] = Some((x, y));
            }
        }
        Ok(set)
    }

    /// True when every present coordinate lies in `[0, max]`.
    pub fn within(&self, max_x: f64, max_y: f64) -> bool {
        self.points.iter().flatten().all(|&(x, y)| (0.0..=max_x).contains(&x) && (0.0..=max_y).contains(&y))
    }
}

pub fn table_header() -> String {
    let mut h = String::from("image_id");
    for name in LANDMARK_NAMES {
        let _ = write!(h, ",{name}_x,{name}_y");
    }
    h
}

/// Rows of a landmark table in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkTable {
    rows: Vec<(String, LandmarkSet)>,
    index: HashMap<String, usize>,
}

impl LandmarkTable {
    pub fn new() -> Self {
        LandmarkTable::default()
    }

    /// Appends a row; duplicate ids are rejected.
    pub fn insert(&mut self, image_id: impl Into<String>, set: LandmarkSet) -> Result<()> {
        let id = image_id.into();
        if id.is_empty() || id.contains(',') || id.contains('\n') {
            return Err(Error::invalid(format!("image id `{id}` must be non-empty without commas or newlines")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate image id `{id}`")));
        }
        self.index.insert(id.clone(), self.rows.len());
        self.rows.push((id, set));
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&LandmarkSet> {
        self.index.get(image_id).map(|&i| &self.rows[i].1)
    }

    pub fn rows(&self) -> &[(String, LandmarkSet)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Serializes with the canonical header; coordinates use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = table_header();
        out.push('\n');
        for (id, set) in &self.rows {
            out.push_str(id);
            for v in set.features() {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Whether the loader rejects coordinates outside the 96×96 frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bounds {
    Enforce,
    /// Keep out-of-frame values so a validation report can list them.
    Report,
}

pub fn load_landmark_table(path: impl AsRef<Path>) -> Result<LandmarkTable> {
    load_landmark_table_with(path, Bounds::Enforce)
}

pub fn load_landmark_table_with(path: impl AsRef<Path>, bounds: Bounds) -> Result<LandmarkTable> {
    let path = path.as_ref();
    parse_landmark_table(&fs::read_to_string(path)?, path, bounds)
}

/// Parses table text; `source` names the input in error messages. Row numbers
/// are 1-based file lines.
pub fn parse_landmark_table(text: &str, source: impl AsRef<Path>, bounds: Bounds) -> Result<LandmarkTable> {
    let source = source.as_ref();
    let mut lines = text.lines().enumerate();
    let header = table_header();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == header => {}
        Some((_, h)) => return Err(Error::parse(source, 1, format!("unexpected header `{}`", truncate(h)))),
        None => return Err(Error::parse(source, 1, "missing header")),
    }
    let mut table = LandmarkTable::new();
    for (i, line) in lines {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 1 + 2 * NUM_POINTS {
            return Err(Error::parse(
                source,
                row,
                format!("expected {} columns, got {}", 1 + 2 * NUM_POINTS, cells.len()),
            ));
        }
        let mut values = [None; 2 * NUM_POINTS];
        for (c, cell) in cells[1..].iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let column = column_name(c);
            let v: f64 =
                cell.parse().map_err(|_| Error::parse(source, row, format!("{column}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(source, row, format!("{column}: non-finite value")));
            }
            if bounds == Bounds::Enforce && !(0.0..=MAX_COORD).contains(&v) {
                return Err(Error::parse(source, row, format!("{column}: {v} outside [0, {MAX_COORD}]")));
            }
            values[c] = Some(v);
        }
        for p in 0..NUM_POINTS {
            if values[2 * p].is_some() != values[2 * p + 1].is_some() {
                return Err(Error::parse(source, row, format!("{}: only one coordinate present", LANDMARK_NAMES[p])));
            }
        }
        let set = LandmarkSet::from_features(&values)?;
        table.insert(cells[0].trim(), set).map_err(|e| Error::parse(source, row, e.to_string()))?;
    }
    Ok(table)
}

/// Name of coordinate column `c` (0-based, excluding `image_id`).
pub fn column_name(c: usize) -> String {
    format!("{}_{}", LANDMARK_NAMES[c / 2], if c.is_multiple_of(2) { "x" } else { "y" })
}

fn truncate(s: &str) -> String {
    s.chars().take(60).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, cells: &[&str]) -> String {
        let mut r = id.to_string();
        for c in cells {
            r.push(',');
            r.push_str(c);
        }
        r
    }

    #[test]
    fn header_lists_thirty_columns_in_order() {
        let h = table_header();
        let cols: Vec<&str> = h.split(',').collect();
        assert_eq!(cols.len(), 31);
        assert_eq!(cols[1], "left_eye_center_x");
        assert_eq!(cols[30], "mouth_center_bottom_lip_y");
    }

    #[test]
    fn empty_row_is_all_missing() {
        let text = format!("{}\n{}\n", table_header(), row("a", &[""; 30]));
        let t = parse_landmark_table(&text, "t.csv", Bounds::Enforce).unwrap();
        assert_eq!(t.get("a").unwrap().present_count(), 0);
    }

    #[test]
    fn out_of_frame_rejected_with_row() {
        let mut cells = vec![""; 30];
        cells[0] = "96";
        cells[1] = "10";
        let text = format!("{}\n{}\n", table_header(), row("a", &cells));
        match parse_landmark_table(&text, "t.csv", Bounds::Enforce) {
            Err(Error::Parse { row, detail, .. }) => {
                assert_eq!(row, 2);
                assert!(detail.contains("left_eye_center_x"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_landmark_table(&text, "t.csv", Bounds::Report).is_ok());
    }

    #[test]
    fn malformed_rows_rejected() {
        let h = table_header();
        assert!(parse_landmark_table(&format!("{h}\na,1,2\n"), "t", Bounds::Enforce).is_err());
        let mut cells = vec![""; 30];
        cells[4] = "abc";
        assert!(parse_landmark_table(&format!("{h}\n{}\n", row("a", &cells)), "t", Bounds::Enforce).is_err());
        let both = format!("{h}\n{}\n{}\n", row("a", &[""; 30]), row("a", &[""; 30]));
        assert!(parse_landmark_table(&both, "t", Bounds::Enforce).is_err());
        assert!(parse_landmark_table("image_id,x\n", "t", Bounds::Enforce).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = LandmarkTable::new();
        let mut set = LandmarkSet::missing();
        set.points[0] = Some((12.345678901234, 0.1));
        set.points[14] = Some((95.0, 47.5));
        t.insert("img_1", set).unwrap();
        t.insert("img_2", LandmarkSet::missing()).unwrap();
        let back = parse_landmark_table(&t.to_csv(), "t", Bounds::Enforce).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mirror_pairs_swap_left_and_right_names() {
        for (a, b) in MIRROR_PAIRS {
            assert_eq!(LANDMARK_NAMES[a].replace("left", "right"), LANDMARK_NAMES[b]);
        }
    }
}
