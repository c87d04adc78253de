use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are reference classes, columns hypotheses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("confusion matrix must be square".into()));
        }
        Ok(Self { counts: rows })
    }

    /// Tally paired reference/hypothesis labels.
    pub fn from_labels(n_classes: usize, reference: &[usize], hypothesis: &[usize]) -> Result<Self> {
        if reference.len() != hypothesis.len() {
            return Err(Error::InvalidParameter(format!(
                "{} references but {} hypotheses",
                reference.len(),
                hypothesis.len()
            )));
        }
        let mut cm = Self::new(n_classes);
        for (&r, &h) in reference.iter().zip(hypothesis) {
            for label in [r, h] {
                if label >= n_classes {
                    return Err(Error::LabelOutOfRange { label, n_classes });
                }
            }
            cm.counts[r][h] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Classes with no reference units; they are left out of the UAR mean.
    pub fn absent_classes(&self) -> Vec<usize> {
        self.row_sums().iter().enumerate().filter(|(_, &s)| s == 0).map(|(c, _)| c).collect()
    }

    /// Element-wise sum.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn uar(&self) -> Result<f64> {
        uar(self)
    }

    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }
}

/// Mean per-class recall over the classes that have reference units.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    let rows = cm.row_sums();
    let present: Vec<usize> = (0..rows.len()).filter(|&c| rows[c] > 0).collect();
    if present.is_empty() {
        return Err(Error::EmptyConfusion);
    }
    let sum: f64 = present.iter().map(|&c| cm.counts[c][c] as f64 / rows[c] as f64).sum();
    Ok(sum / present.len() as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    Ok(cm.trace() as f64 / total as f64)
}
