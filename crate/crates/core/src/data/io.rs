//! Dataset directories: images, a labels file and a landmark table.
//!
//! The labels file is comma-separated text `image_id,class,gender` with that
//! header; images are `<image_id>.pgm` (or `.ppm`) in one directory.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::data::image::{normalize_image, NORMALIZED_SIZE};
use crate::data::landmarks::{LandmarkSet, LandmarkTable};
use crate::data::pnm::{read_pnm, write_pgm};
use crate::data::sample::{Dataset, Gender, Sample};
use crate::error::{Error, Result};

pub const LABELS_HEADER: &str = "image_id,class,gender";

/// One labels-file row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRow {
    pub image_id: String,
    pub class: String,
    pub gender: Gender,
}

pub fn parse_labels(text: &str, source: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let source = source.as_ref();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == LABELS_HEADER => {}
        _ => return Err(Error::parse(source, 1, format!("expected header `{LABELS_HEADER}`"))),
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (n, line) in lines {
        let row = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, class, gender] = cells[..] else {
            return Err(Error::parse(source, row, format!("expected 3 columns, got {}", cells.len())));
        };
        if id.is_empty() || class.is_empty() {
            return Err(Error::parse(source, row, "empty image id or class"));
        }
        let gender = gender.parse().map_err(|e: Error| Error::parse(source, row, e.to_string()))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(source, row, format!("duplicate image `{id}`")));
        }
        rows.push(LabelRow { image_id: id.into(), class: class.into(), gender });
    }
    Ok(rows)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    parse_labels(&fs::read_to_string(path)?, path)
}

/// Loads and normalizes every labeled image. Images without a landmark row
/// get an all-missing set.
pub fn load_dataset(images_dir: &Path, labels: &Path, landmarks: Option<&LandmarkTable>) -> Result<Dataset> {
    let rows = load_labels(labels)?;
    if rows.is_empty() {
        return Err(Error::Empty(format!("{}: no labeled images", labels.display())));
    }
    let classes: Vec<String> = rows.iter().map(|r| r.class.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut samples = Vec::with_capacity(rows.len());
    let mut unannotated = 0;
    for r in rows {
        let pgm = images_dir.join(format!("{}.pgm", r.image_id));
        let path = if pgm.exists() { pgm } else { images_dir.join(format!("{}.ppm", r.image_id)) };
        let raw = read_pnm(&path)?.into_gray()?;
        let pixels = normalize_image(&raw, NORMALIZED_SIZE)?.image;
        let set = match landmarks.and_then(|t| t.get(&r.image_id)) {
            Some(s) => *s,
            None => {
                unannotated += 1;
                LandmarkSet::missing()
            }
        };
        samples.push(Sample {
            class_label: classes.binary_search(&r.class).expect("class in vocabulary"),
            image_id: r.image_id,
            pixels,
            gender: r.gender,
            landmarks: set,
            augmented_from: None,
        });
    }
    if landmarks.is_some() && unannotated > 0 {
        warn!("{unannotated} images have no landmark row; treating all their points as missing");
    }
    Dataset::new(classes, samples)
}

/// Writes `images/<id>.pgm`, `labels.csv` and `landmarks.csv` under `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let mut labels = format!("{LABELS_HEADER}\n");
    let mut table = LandmarkTable::new();
    for s in &dataset.samples {
        write_pgm(images.join(format!("{}.pgm", s.image_id)), &s.pixels)?;
        let _ = writeln!(labels, "{},{},{}", s.image_id, dataset.classes[s.class_label], s.gender);
        table.insert(s.image_id.clone(), s.landmarks)?;
    }
    fs::write(dir.join("labels.csv"), labels)?;
    table.save(dir.join("landmarks.csv"))
}
