//! Confusion counts, ROC construction and AUC. PD is the positive class and a
//! probability of at least 0.5 predicts PD.

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// `scores` pairs a PD probability with whether the sample is PD.
    pub fn at_threshold(scores: &[(f64, bool)], threshold: f64) -> Self {
        let mut c = Self::default();
        for &(p, pd) in scores {
            match (p >= threshold, pd) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// `(fpr, tpr)` from (0, 0) to (1, 1), fpr non-decreasing.
    pub roc_points: Vec<(f64, f64)>,
    pub confusion: Confusion,
}

impl MetricSet {
    pub fn from_scores(scores: &[(f64, bool)]) -> Result<Self, EvalError> {
        let confusion = Confusion::at_threshold(scores, THRESHOLD);
        Ok(Self {
            accuracy: confusion.accuracy(),
            auc: compute_auc(scores)?,
            sensitivity: confusion.sensitivity(),
            specificity: confusion.specificity(),
            roc_points: roc_curve(scores)?,
            confusion,
        })
    }
}

/// Cumulative `(fp, tp)` steps plus the positive and negative totals.
type RocCounts = (Vec<(u64, u64)>, u64, u64);

/// Cumulative `(fp, tp)` counts after each group of tied scores, highest
/// score first, starting at `(0, 0)`.
fn roc_counts(scores: &[(f64, bool)]) -> Result<RocCounts, EvalError> {
    let pos = scores.iter().filter(|s| s.1).count() as u64;
    let neg = scores.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(EvalError::InvalidScore);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut steps = vec![(0, 0)];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((fp, tp));
    }
    Ok((steps, pos, neg))
}

/// ROC with a threshold at every distinct score plus the two infinite ends.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<(f64, f64)>, EvalError> {
    let (steps, pos, neg) = roc_counts(scores)?;
    Ok(steps.into_iter().map(|(fp, tp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)).collect())
}

/// Trapezoidal area under the ROC. Accumulated in integer counts, so it equals
/// the normalized Mann-Whitney statistic exactly.
pub fn compute_auc(scores: &[(f64, bool)]) -> Result<f64, EvalError> {
    let (steps, pos, neg) = roc_counts(scores)?;
    let twice_area: u128 =
        steps.windows(2).map(|w| u128::from(w[1].0 - w[0].0) * u128::from(w[1].1 + w[0].1)).sum();
    Ok(twice_area as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
}

/// Trapezoidal area under an explicit polyline of `(fpr, tpr)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}
