//! Labeled feature vectors (`image_id,label,f0,…,f2047`).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Width of the bottleneck feature vectors.
pub const FEATURE_DIM: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    /// Dense labels indexing `vocabulary`.
    pub labels: Vec<usize>,
    /// Distinct label strings, sorted.
    pub vocabulary: Vec<String>,
    /// One row per sample, each `dim` wide.
    pub rows: Vec<Vec<f64>>,
    pub dim: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            vocabulary: self.vocabulary.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            dim: self.dim,
        }
    }

    /// `label,index` lines mapping label strings to dense indices.
    pub fn vocabulary_csv(&self) -> String {
        let mut out = String::from("label,index\n");
        for (i, l) in self.vocabulary.iter().enumerate() {
            let _ = writeln!(out, "{l},{i}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for ((id, &label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let _ = write!(out, "{id},{}", self.vocabulary[label]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_feature_vectors(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    parse_feature_vectors(&fs::read_to_string(path)?, path, FEATURE_DIM)
}

/// Parses feature text with `dim` values per row. A first line starting with
/// `image_id,` is treated as a header.
pub fn parse_feature_vectors(text: &str, source: impl AsRef<Path>, dim: usize) -> Result<FeatureSet> {
    let source = source.as_ref();
    let mut ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (n == 0 && line.starts_with("image_id,")) {
            continue;
        }
        let mut cells = line.split(',');
        let id = cells.next().unwrap_or_default().trim();
        let label = cells.next().ok_or_else(|| Error::parse(source, row, "missing label"))?.trim();
        if id.is_empty() || label.is_empty() {
            return Err(Error::parse(source, row, "empty image id or label"));
        }
        let values = cells
            .enumerate()
            .map(|(j, c)| match c.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(source, row, format!("f{j}: `{}` is not a finite number", c.trim()))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(source, row, format!("expected {dim} features, got {}", values.len())));
        }
        ids.push(id.to_string());
        raw_labels.push(label.to_string());
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{}: no feature rows", source.display())));
    }
    let vocabulary: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels.iter().map(|l| vocabulary.binary_search(l).expect("label in vocabulary")).collect();
    Ok(FeatureSet { ids, labels, vocabulary, rows, dim })
}
