//! Range and statistical checks of annotated landmarks.

use log::warn;

use crate::data::landmarks::{column_name, LandmarkTable, MAX_COORD, NUM_POINTS};

pub const DEFAULT_SIGMA_K: f64 = 3.0;

/// Per-column mean and sample standard deviation over present values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Reason {
    OutOfFrame,
    Outlier { mean: f64, std_dev: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub image_id: String,
    /// Coordinate column, 0..30.
    pub column: usize,
    pub value: f64,
    pub reason: Reason,
}

impl Violation {
    pub fn describe(&self) -> String {
        let what = match &self.reason {
            Reason::OutOfFrame => format!("outside [0, {MAX_COORD}]"),
            Reason::Outlier { mean, std_dev } => format!("outside mean {mean:.3} ± k·{std_dev:.3}"),
        };
        format!("{}: {} = {} {what}", self.image_id, column_name(self.column), self.value)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub stats: Vec<Option<ColumnStats>>,
    pub violations: Vec<Violation>,
    /// Columns with fewer than two present values, whose statistical check was skipped.
    pub skipped_columns: Vec<usize>,
    pub checked: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn column_stats(values: &[f64]) -> Option<ColumnStats> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Some(ColumnStats { mean, std_dev: var.sqrt(), count: n })
}

/// A present coordinate is valid when it lies inside the frame and within
/// `mean ± k·σ` of its column; missing points are always valid.
pub fn validate_annotations(table: &LandmarkTable, k: f64) -> ValidationReport {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 2 * NUM_POINTS];
    for (_, set) in table.rows() {
        for (c, v) in set.features().iter().enumerate() {
            if let Some(v) = v {
                columns[c].push(*v);
            }
        }
    }
    let stats: Vec<Option<ColumnStats>> = columns.iter().map(|c| column_stats(c)).collect();
    let mut report = ValidationReport { stats, ..Default::default() };
    for (c, s) in report.stats.iter().enumerate() {
        if s.is_none() {
            warn!("column {} has fewer than two values; statistical check skipped", column_name(c));
            report.skipped_columns.push(c);
        }
    }
    for (id, set) in table.rows() {
        for (c, v) in set.features().iter().enumerate() {
            let Some(v) = *v else { continue };
            report.checked += 1;
            let reason = if !(0.0..=MAX_COORD).contains(&v) {
                Some(Reason::OutOfFrame)
            } else {
                report.stats[c]
                    .filter(|s| (v - s.mean).abs() > k * s.std_dev)
                    .map(|s| Reason::Outlier { mean: s.mean, std_dev: s.std_dev })
            };
            if let Some(reason) = reason {
                report.violations.push(Violation { image_id: id.clone(), column: c, value: v, reason });
            }
        }
    }
    report
}
