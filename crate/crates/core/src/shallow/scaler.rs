//! Min-max feature scaling.

use crate::error::{Error, Result};
use crate::models::Container;
use crate::nn::Tensor;

/// Per-feature `[min, max]` learned from training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Empty("cannot fit a scaler on no rows".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid("rows have no features"));
        }
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            check_dim(r, dim)?;
            for (j, &v) in r.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x − min) / (max − min)` clamped to `[0, 1]`; constant features map to 0.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(row, self.dim())?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    ((v - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }

    pub(crate) fn write(&self, c: &mut Container) -> Result<()> {
        c.tensors.push(("scaler.min".into(), Tensor::new(&[self.dim()], self.min.clone())?));
        c.tensors.push(("scaler.max".into(), Tensor::new(&[self.dim()], self.max.clone())?));
        Ok(())
    }

    pub(crate) fn read(c: &Container) -> Result<Self> {
        let min = c.tensor("scaler.min")?.data().to_vec();
        let max = c.tensor("scaler.max")?.data().to_vec();
        if min.len() != max.len() {
            return Err(Error::Format("scaler min and max differ in length".into()));
        }
        Ok(Scaler { min, max })
    }
}

fn check_dim(row: &[f64], dim: usize) -> Result<()> {
    if row.len() != dim {
        return Err(Error::shape("scaler", format!("row has {} features, expected {dim}", row.len())));
    }
    Ok(())
}
