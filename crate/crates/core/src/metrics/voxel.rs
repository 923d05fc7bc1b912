use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Real;
use crate::volume::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

/// Per-voxel tally of `pred` against `reference` on a shared grid.
pub fn confusion_counts<T: Real>(pred: &BinaryMask<T>, reference: &BinaryMask<T>) -> Result<ConfusionCounts> {
    pred.geometry().ensure_same(reference.geometry())?;
    Ok(pred
        .bits()
        .par_chunks(1 << 16)
        .zip(reference.bits().par_chunks(1 << 16))
        .map(|(p, r)| {
            let mut c = ConfusionCounts::default();
            for (&a, &b) in p.iter().zip(r) {
                match (a, b) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
            c
        })
        .reduce(ConfusionCounts::default, ConfusionCounts::add))
}

/// `num / den`, or `None` when `den == 0`.
fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sensitivity, specificity and precision. Zero denominators give `None`.
pub fn classification_metrics(c: &ConfusionCounts) -> (Option<f64>, Option<f64>, Option<f64>) {
    (ratio(c.tp, c.tp + c.fn_), ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fp))
}

pub fn dice(c: &ConfusionCounts) -> Option<f64> {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

pub fn jaccard(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fp + c.fn_)
}

/// `1 - |fn - fp| / (2 tp + fp + fn)`.
pub fn volume_similarity(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.fn_.abs_diff(c.fp), 2 * c.tp + c.fp + c.fn_).map(|r| 1.0 - r)
}

/// All voxel-overlap metrics for one mask pair; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelMetrics {
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub volume_similarity: Option<f64>,
}

impl VoxelMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let (sensitivity, specificity, precision) = classification_metrics(&counts);
        Self {
            counts,
            sensitivity,
            specificity,
            precision,
            dice: dice(&counts),
            jaccard: jaccard(&counts),
            volume_similarity: volume_similarity(&counts),
        }
    }
}

pub fn voxel_metrics<T: Real>(pred: &BinaryMask<T>, reference: &BinaryMask<T>) -> Result<VoxelMetrics> {
    Ok(VoxelMetrics::from_counts(confusion_counts(pred, reference)?))
}
