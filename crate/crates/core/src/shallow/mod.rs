//! Classical recognizers over feature vectors: RBF SVM, gradient boosting,
//! min-max scaling and cross-validated grid search.

pub mod gb;
pub mod grid;
pub mod scaler;
pub mod smo;
pub mod svm;

use std::path::Path;

pub use gb::{gb_train, GbModel, GbParams, GbTrainRun};
pub use grid::{gb_grid, grid_search_cv, stratified_folds, svm_grid, CellScore, GridCell, GridResult, DEFAULT_FOLDS};
pub use scaler::Scaler;
pub use smo::{rbf, solve_binary, BinarySolution, SmoParams};
pub use svm::{svm_train, SvmModel, SvmParams};

use crate::error::{Error, Result};
use crate::models::Container;

#[derive(Clone, Debug, PartialEq)]
pub enum ShallowModel {
    Svm(SvmModel),
    Gb(GbModel),
}

impl ShallowModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ShallowModel::Svm(_) => "svm",
            ShallowModel::Gb(_) => "gb",
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ShallowModel::Svm(m) => m.num_classes,
            ShallowModel::Gb(m) => m.num_classes,
        }
    }

    /// Class probabilities, or SVM decision values for a model trained
    /// without probability estimates. Higher is better either way.
    pub fn scores_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            ShallowModel::Svm(m) => m.scores_row(x),
            ShallowModel::Gb(m) => m.predict_proba_row(x),
        }
    }
}

/// A fitted scaler followed by a classifier over the scaled rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowPipeline {
    pub scaler: Scaler,
    pub model: ShallowModel,
}

impl ShallowPipeline {
    /// Fits the scaler on `rows`, then `train` on the scaled rows.
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[usize],
        train: impl FnOnce(&[Vec<f64>], &[usize]) -> Result<ShallowModel>,
    ) -> Result<Self> {
        let scaler = Scaler::fit(rows)?;
        let scaled = scaler.transform(rows)?;
        Ok(ShallowPipeline { model: train(&scaled, labels)?, scaler })
    }

    pub fn scores_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.scores_row(&self.scaler.transform_row(x)?)
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores_row(x)?))
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(self.model.kind());
        self.scaler.write(&mut c)?;
        match &self.model {
            ShallowModel::Svm(m) => m.write(&mut c)?,
            ShallowModel::Gb(m) => m.write(&mut c)?,
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let model = match c.kind.as_str() {
            "svm" => ShallowModel::Svm(SvmModel::read(c)?),
            "gb" => ShallowModel::Gb(GbModel::read(c)?),
            other => return Err(Error::Format(format!("`{other}` is not a shallow model kind"))),
        };
        let scaler = Scaler::read(c)?;
        let dim = match &model {
            ShallowModel::Svm(m) => m.dim(),
            ShallowModel::Gb(m) => m.dim,
        };
        if scaler.dim() != dim {
            return Err(Error::Format(format!("scaler has {} features, model {dim}", scaler.dim())));
        }
        Ok(ShallowPipeline { scaler, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Checks rows are non-empty, rectangular and paired with labels; returns the width.
pub(crate) fn check_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!("{} rows vs {} labels", rows.len(), labels.len())));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::invalid("rows have no features"));
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("shallow", "rows differ in length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training rows"));
    }
    Ok(dim)
}

/// `max label + 1`, requiring at least two distinct labels.
pub(crate) fn class_count(labels: &[usize]) -> Result<usize> {
    let first = labels.first().ok_or_else(|| Error::Empty("no labels".into()))?;
    if labels.iter().all(|l| l == first) {
        return Err(Error::invalid("training data holds a single class"));
    }
    Ok(labels.iter().max().map_or(0, |m| m + 1))
}
