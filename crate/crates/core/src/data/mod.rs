//! Datasets, PU splitting and prior bookkeeping.
//!
//! A [`LabeledDataset`] carries the ground truth and is only ever looked at
//! by the splitter and the evaluators. Training code sees a [`PuSplit`],
//! which exposes the labeled positives `P` and the unlabeled pool `U`.

mod io;
mod split;
mod synthetic;

pub use io::{load_dataset, load_delimited, load_idx_pair, write_delimited, DatasetFile};
pub use split::{make_pu_split, perturb_mu_p, PuSplit};
pub use synthetic::gen_two_gaussians;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Feature matrix (one row per sample) plus binary ground truth, `1` marking
/// the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} is not binary"
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            let d = features.ncols().max(1);
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.n_rows() - self.n_positive()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
