//! Confusion matrices, macro precision / recall / F, accuracy and top-k error.

use crate::error::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("confusion matrix needs at least one class"));
        }
        Ok(ConfusionMatrix { counts: vec![vec![0; num_classes]; num_classes] })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion counts must be a non-empty square matrix"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_pairs(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid(format!("{} truths vs {} predictions", truth.len(), predicted.len())));
        }
        let mut m = ConfusionMatrix::new(num_classes)?;
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes();
        if truth >= k || predicted >= k {
            return Err(Error::invalid(format!("class pair ({truth}, {predicted}) outside 0..{k}")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Per-class `(precision, recall, f)`, with every 0/0 taken as 0.
    pub fn per_class(&self) -> Vec<(f64, f64, f64)> {
        let k = self.num_classes();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: u64 = (0..k).map(|t| self.counts[t][c]).sum();
                let actual: u64 = self.counts[c].iter().sum();
                let p = ratio(tp, predicted as f64);
                let r = ratio(tp, actual as f64);
                (p, r, ratio(2.0 * p * r, p + r))
            })
            .collect()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// How the macro F score is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MacroF {
    /// Mean of the per-class F scores.
    #[default]
    MeanOfClassF,
    /// Harmonic mean of macro precision and macro recall.
    OfMacroPr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn macro_prf(m: &ConfusionMatrix) -> Result<Prf> {
    macro_prf_with(m, MacroF::MeanOfClassF)
}

pub fn macro_prf_with(m: &ConfusionMatrix, mode: MacroF) -> Result<Prf> {
    if m.total() == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    let per = m.per_class();
    let k = per.len() as f64;
    let precision = per.iter().map(|c| c.0).sum::<f64>() / k;
    let recall = per.iter().map(|c| c.1).sum::<f64>() / k;
    let f1 = match mode {
        MacroF::MeanOfClassF => per.iter().map(|c| c.2).sum::<f64>() / k,
        MacroF::OfMacroPr => ratio(2.0 * precision * recall, precision + recall),
    };
    Ok(Prf { precision, recall, f1 })
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    let diag: u64 = (0..m.num_classes()).map(|c| m.counts[c][c]).sum();
    Ok(diag as f64 / total as f64)
}

/// Fraction of samples whose true class is not among the first `k` entries
/// of its ranking (best first).
pub fn topk_error(rankings: &[Vec<usize>], truths: &[usize], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if rankings.len() != truths.len() {
        return Err(Error::invalid(format!("{} rankings vs {} truths", rankings.len(), truths.len())));
    }
    if truths.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let misses = rankings.iter().zip(truths).filter(|(r, t)| !r.iter().take(k).any(|c| c == *t)).count();
    Ok(misses as f64 / truths.len() as f64)
}
