//! Stratified k-fold cross-validated grid search.

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::stream;
use crate::shallow::gb::GbParams;
use crate::shallow::svm::SvmParams;
use crate::shallow::{check_rows, class_count, ShallowModel, ShallowPipeline};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridCell {
    Svm(SvmParams),
    Gb(GbParams),
}

impl GridCell {
    /// Smaller is preferred on ties: C for the SVM, stage count for boosting.
    fn tie_key(&self) -> f64 {
        match self {
            GridCell::Svm(p) => p.c,
            GridCell::Gb(p) => p.stages as f64,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GridCell::Svm(p) => format!("svm c={} gamma={}", p.c, p.gamma),
            GridCell::Gb(p) => format!("gb shrinkage={} max_depth={} stages={}", p.shrinkage, p.max_depth, p.stages),
        }
    }

    pub fn fit(&self, rows: &[Vec<f64>], labels: &[usize]) -> Result<ShallowPipeline> {
        ShallowPipeline::fit(rows, labels, |scaled, labels| {
            Ok(match self {
                GridCell::Svm(p) => ShallowModel::Svm(crate::shallow::svm::svm_train(scaled, labels, p)?),
                GridCell::Gb(p) => ShallowModel::Gb(crate::shallow::gb::gb_train(scaled, labels, p)?.model),
            })
        })
    }
}

/// Every `(C, gamma)` pair, C-major.
pub fn svm_grid(cs: &[f64], gammas: &[f64], base: SvmParams) -> Vec<GridCell> {
    cs.iter().flat_map(|&c| gammas.iter().map(move |&gamma| GridCell::Svm(SvmParams { c, gamma, ..base }))).collect()
}

/// Every `(shrinkage, max_depth, stages)` triple, shrinkage-major.
pub fn gb_grid(shrinkages: &[f64], depths: &[usize], stages: &[usize]) -> Vec<GridCell> {
    let mut out = Vec::new();
    for &shrinkage in shrinkages {
        for &max_depth in depths {
            for &s in stages {
                out.push(GridCell::Gb(GbParams { shrinkage, max_depth, stages: s }));
            }
        }
    }
    out
}

/// Assigns each row a fold: rows of each class are shuffled and dealt round
/// robin. `folds` is lowered to the smallest class size when needed.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let k = class_count(labels)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < 2 {
        return Err(Error::invalid("every class needs at least 2 rows for cross-validation"));
    }
    let used = if smallest < folds {
        warn!("smallest class has {smallest} rows; using {smallest} folds instead of {folds}");
        smallest
    } else {
        folds
    };
    let mut assignment = vec![0; labels.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut stream(seed, &format!("fold:{class}"), 0));
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = j % used;
        }
    }
    Ok((assignment, used))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellScore {
    pub cell: GridCell,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: usize,
    pub folds: usize,
    pub cells: Vec<CellScore>,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best].cell
    }
}

/// Mean validation accuracy of every cell. The scaler is re-fit on each
/// fold's training part. The best cell has the highest mean; ties go to the
/// smaller C or stage count, then to the earlier cell.
pub fn grid_search_cv(
    rows: &[Vec<f64>],
    labels: &[usize],
    grid: &[GridCell],
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    check_rows(rows, labels)?;
    if grid.is_empty() {
        return Err(Error::Empty("grid has no cells".into()));
    }
    let svm = matches!(grid[0], GridCell::Svm(_));
    if grid.iter().any(|c| matches!(c, GridCell::Svm(_)) != svm) {
        return Err(Error::invalid("a grid must hold a single model family"));
    }
    let (assignment, used) = stratified_folds(labels, folds, seed)?;
    let mut cells = Vec::with_capacity(grid.len());
    for cell in grid {
        let mut fold_accuracy = Vec::with_capacity(used);
        for f in 0..used {
            let (train, val): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| assignment[i] != f);
            let tr_rows: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
            let tr_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let model = cell.fit(&tr_rows, &tr_labels)?;
            let mut correct = 0usize;
            for &i in &val {
                if model.predict_row(&rows[i])? == labels[i] {
                    correct += 1;
                }
            }
            fold_accuracy.push(correct as f64 / val.len() as f64);
        }
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / used as f64;
        cells.push(CellScore { cell: *cell, fold_accuracy, mean_accuracy });
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        if c.mean_accuracy > b.mean_accuracy
            || (c.mean_accuracy == b.mean_accuracy && c.cell.tie_key() < b.cell.tie_key())
        {
            best = i;
        }
    }
    Ok(GridResult { best, folds: used, cells })
}
