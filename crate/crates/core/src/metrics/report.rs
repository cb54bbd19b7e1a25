//! Ranked prediction files and metric reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::classification::{accuracy, macro_prf_with, topk_error, ConfusionMatrix, MacroF};

/// One line of a prediction file: `image_id,class1,p1,class2,p2,…`, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub ranked: Vec<(String, f64)>,
}

pub fn parse_predictions(text: &str, source: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let source = source.as_ref();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 3 || cells.len().is_multiple_of(2) {
            return Err(Error::parse(source, row, "expected image_id followed by class,probability pairs"));
        }
        let mut ranked = Vec::with_capacity(cells.len() / 2);
        for pair in cells[1..].chunks_exact(2) {
            let p: f64 = pair[1]
                .parse()
                .map_err(|_| Error::parse(source, row, format!("`{}` is not a probability", pair[1])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(source, row, format!("probability {p} outside [0, 1]")));
            }
            ranked.push((pair[0].to_string(), p));
        }
        out.push(PredictionRecord { image_id: cells[0].to_string(), ranked });
    }
    Ok(out)
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.image_id);
        for (c, p) in &r.ranked {
            let _ = write!(out, ",{c},{p}");
        }
        out.push('\n');
    }
    out
}

/// Recognition scores over a set of predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionReport {
    pub samples: usize,
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// F of macro precision and macro recall, for comparison.
    pub f1_of_macro_pr: f64,
    pub top5_error: f64,
    pub confusion: ConfusionMatrix,
}

/// Scores `predictions` against `truth` (image id → class name). The class
/// vocabulary is the sorted union of true and predicted names.
pub fn evaluate_recognition(
    predictions: &[PredictionRecord],
    truth: &HashMap<String, String>,
) -> Result<RecognitionReport> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let mut names: BTreeSet<&str> = truth.values().map(String::as_str).collect();
    for r in predictions {
        names.extend(r.ranked.iter().map(|(c, _)| c.as_str()));
    }
    let classes: Vec<String> = names.into_iter().map(str::to_string).collect();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut truths = Vec::with_capacity(predictions.len());
    let mut rankings = Vec::with_capacity(predictions.len());
    for r in predictions {
        let t =
            truth.get(&r.image_id).ok_or_else(|| Error::invalid(format!("no ground truth for `{}`", r.image_id)))?;
        truths.push(index[t.as_str()]);
        rankings.push(r.ranked.iter().map(|(c, _)| index[c.as_str()]).collect::<Vec<_>>());
    }
    let top1: Vec<usize> = rankings.iter().map(|r| r[0]).collect();
    let confusion = ConfusionMatrix::from_pairs(classes.len(), &truths, &top1)?;
    let prf = macro_prf_with(&confusion, MacroF::MeanOfClassF)?;
    let alt = macro_prf_with(&confusion, MacroF::OfMacroPr)?;
    Ok(RecognitionReport {
        samples: predictions.len(),
        accuracy: accuracy(&confusion)?,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        f1_of_macro_pr: alt.f1,
        top5_error: topk_error(&rankings, &truths, 5)?,
        classes,
        confusion,
    })
}

impl RecognitionReport {
    pub fn to_kv(&self) -> String {
        kv(&[
            ("samples", self.samples.to_string()),
            ("classes", self.classes.len().to_string()),
            ("accuracy", self.accuracy.to_string()),
            ("macro_precision", self.precision.to_string()),
            ("macro_recall", self.recall.to_string()),
            ("macro_f1", self.f1.to_string()),
            ("macro_f1_of_macro_pr", self.f1_of_macro_pr.to_string()),
            ("top5_error", self.top5_error.to_string()),
        ])
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "samples: {}\nclasses: {}\naccuracy: {:.4}\nmacro precision: {:.4}\nmacro recall: {:.4}\nmacro F1: {:.4}\ntop-5 error: {:.4}\n\nconfusion (rows = truth):\n",
            self.samples,
            self.classes.len(),
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.top5_error
        );
        for (name, row) in self.classes.iter().zip(self.confusion.rows()) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "  {name}: {}", cells.join(" "));
        }
        out
    }
}

/// `key=value` lines.
pub fn kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::parse("<kv>", n + 1, format!("`{line}` is not key=value")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_round_trip() {
        let text = "a,cat,0.7,dog,0.3\nb,dog,1\n";
        let p = parse_predictions(text, "p").unwrap();
        assert_eq!(p[0].ranked[1], ("dog".to_string(), 0.3));
        assert_eq!(parse_predictions(&format_predictions(&p), "p").unwrap(), p);
        assert!(parse_predictions("a,cat\n", "p").is_err());
        assert!(parse_predictions("a,cat,1.5\n", "p").is_err());
    }

    #[test]
    fn report_scores() {
        let p = parse_predictions("a,x,0.9,y,0.1\nb,x,0.6,y,0.4\nc,y,0.8,x,0.2\n", "p").unwrap();
        let truth: HashMap<String, String> =
            [("a", "x"), ("b", "y"), ("c", "y")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let r = evaluate_recognition(&p, &truth).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.top5_error, 0.0);
        let kv = parse_kv(&r.to_kv()).unwrap();
        assert_eq!(kv["samples"], "3");
        assert!(r.to_text().contains("macro F1"));
    }
}
