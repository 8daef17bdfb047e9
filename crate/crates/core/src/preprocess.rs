//! Fixed-length cutoff with zero padding, percentile clipping and z-scoring.
//!
//! All statistics are fitted on training matrices only; applying them never
//! looks at the data being transformed beyond the value itself.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

/// Floor below which a fitted standard deviation is replaced by 1.
pub const STD_FLOOR: f64 = 1e-8;

const STATS_MAGIC: &str = "hwpd-normalization v1";

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("column mismatch: expected {expected} columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("column name mismatch at {index}: expected {expected:?}, got {got:?}")]
    ColumnNameMismatch { index: usize, expected: String, got: String },
    #[error("invalid percentiles ({0}, {1})")]
    InvalidPercentiles(f64, f64),
    #[error("malformed statistics file: {0}")]
    MalformedStats(String),
    #[error("io: {0}")]
    Io(String),
}

/// Padding and truncation rule for a common sequence length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthPolicy {
    pub cutoff: usize,
}

/// Which sequences the cutoff averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffScope {
    #[default]
    TrainOnly,
    /// Includes test sequence lengths.
    AllSequences,
}

/// Rounded (half up) mean of the unpadded sequence lengths.
pub fn compute_cutoff(train: &[FeatureMatrix]) -> Result<LengthPolicy, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    let n = train.len() as u128;
    let sum: u128 = train.iter().map(|f| f.valid_rows as u128).sum();
    let cutoff = ((2 * sum + n) / (2 * n)) as usize;
    Ok(LengthPolicy { cutoff: cutoff.max(1) })
}

/// Post-pads with zero rows or keeps the first `cutoff` rows.
pub fn fit_length(fm: &FeatureMatrix, policy: LengthPolicy) -> FeatureMatrix {
    let m = fm.cols();
    let keep = fm.rows.min(policy.cutoff);
    let mut values = Vec::with_capacity(policy.cutoff * m);
    values.extend_from_slice(&fm.values[..keep * m]);
    values.resize(policy.cutoff * m, 0.0);
    FeatureMatrix {
        values,
        rows: policy.cutoff,
        valid_rows: fm.valid_rows.min(policy.cutoff),
        ..fm.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub low_clip: f64,
    pub high_clip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub columns: Vec<ColumnStats>,
    pub fitted_on: usize,
}

/// Percentile of sorted data by linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits per-column clip bounds and z-score statistics on the non-padding rows
/// of the training matrices. Mean and std are taken after clipping.
pub fn fit_normalization(
    train: &[FeatureMatrix],
    clip_low_pct: f64,
    clip_high_pct: f64,
) -> Result<NormalizationStats, PreprocessError> {
    if !(0.0..100.0).contains(&clip_low_pct) || !(clip_low_pct < clip_high_pct && clip_high_pct <= 100.0) {
        return Err(PreprocessError::InvalidPercentiles(clip_low_pct, clip_high_pct));
    }
    let first = train.first().ok_or(PreprocessError::EmptyDataset)?;
    let m = first.cols();
    for fm in train {
        check_columns(&first.column_names, fm)?;
    }
    let total: usize = train.iter().map(|f| f.valid_rows).sum();
    if total == 0 {
        return Err(PreprocessError::EmptyDataset);
    }

    let mut columns = Vec::with_capacity(m);
    let mut col = Vec::with_capacity(total);
    for j in 0..m {
        col.clear();
        for fm in train {
            col.extend((0..fm.valid_rows).map(|t| fm.values[t * m + j]));
        }
        let (low, high) = if clip_low_pct == 0.0 && clip_high_pct == 100.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            (percentile(&sorted, clip_low_pct), percentile(&sorted, clip_high_pct))
        };
        let n = col.len() as f64;
        let mean = col.iter().map(|v| v.clamp(low, high)).sum::<f64>() / n;
        let var = col.iter().map(|v| (v.clamp(low, high) - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        columns.push(ColumnStats {
            name: first.column_names[j].clone(),
            mean,
            std: if std < STD_FLOOR { 1.0 } else { std },
            low_clip: low,
            high_clip: high,
        });
    }
    Ok(NormalizationStats { columns, fitted_on: train.len() })
}

fn check_columns(names: &[String], fm: &FeatureMatrix) -> Result<(), PreprocessError> {
    if fm.cols() != names.len() {
        return Err(PreprocessError::ColumnMismatch { expected: names.len(), got: fm.cols() });
    }
    for (index, (a, b)) in names.iter().zip(&fm.column_names).enumerate() {
        if a != b {
            return Err(PreprocessError::ColumnNameMismatch { index, expected: a.clone(), got: b.clone() });
        }
    }
    Ok(())
}

/// Clamps then standardizes every value, padding rows included.
pub fn apply_normalization(fm: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix, PreprocessError> {
    let names: Vec<String> = stats.columns.iter().map(|c| c.name.clone()).collect();
    check_columns(&names, fm)?;
    let m = fm.cols();
    let mut out = fm.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        let c = &stats.columns[i % m];
        *v = (v.clamp(c.low_clip, c.high_clip) - c.mean) / c.std;
    }
    Ok(out)
}

/// A fitted cutoff plus normalization, replayed identically at training,
/// evaluation and scoring time.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    pub cutoff: LengthPolicy,
    pub stats: NormalizationStats,
}

impl Preprocessor {
    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix, PreprocessError> {
        apply_normalization(&fit_length(fm, self.cutoff), &self.stats)
    }
}

impl NormalizationStats {
    /// Identity transform for the given columns.
    pub fn identity(names: &[String]) -> Self {
        Self {
            columns: names
                .iter()
                .map(|n| ColumnStats {
                    name: n.clone(),
                    mean: 0.0,
                    std: 1.0,
                    low_clip: f64::NEG_INFINITY,
                    high_clip: f64::INFINITY,
                })
                .collect(),
            fitted_on: 0,
        }
    }

    /// Versioned tab-separated text. Floats are written in shortest round-trip
    /// form so that [`NormalizationStats::from_text`] restores them bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = format!("{STATS_MAGIC}\nfitted_on\t{}\ncolumn\tmean\tstd\tlow_clip\thigh_clip\n", self.fitted_on);
        for c in &self.columns {
            writeln!(out, "{}\t{}\t{}\t{}\t{}", c.name, c.mean, c.std, c.low_clip, c.high_clip)
                .expect("write to string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PreprocessError> {
        let bad = |m: &str| PreprocessError::MalformedStats(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(STATS_MAGIC) {
            return Err(bad("missing or unsupported version header"));
        }
        let fitted_on = lines
            .next()
            .and_then(|l| l.strip_prefix("fitted_on\t"))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("fitted_on"))?;
        if lines.next() != Some("column\tmean\tstd\tlow_clip\thigh_clip") {
            return Err(bad("column header"));
        }
        let mut columns = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let c = ColumnStats {
                name: f[0].to_string(),
                mean: num(f[1])?,
                std: num(f[2])?,
                low_clip: num(f[3])?,
                high_clip: num(f[4])?,
            };
            if c.low_clip > c.high_clip || c.std <= 0.0 {
                return Err(bad(line));
            }
            columns.push(c);
        }
        Ok(Self { columns, fitted_on })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        std::fs::write(path, self.to_text()).map_err(|e| PreprocessError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let text = std::fs::read_to_string(path).map_err(|e| PreprocessError::Io(e.to_string()))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureGroup;
    use crate::signal_io::Label;

    pub(crate) fn matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for j in 0..cols {
                values.push(f(t, j));
            }
        }
        FeatureMatrix {
            values,
            rows,
            valid_rows: rows,
            column_names: (0..cols).map(|j| format!("c{j}")).collect(),
            column_groups: vec![FeatureGroup::Raw; cols],
            label: Label::Hc,
            subject_id: "s".into(),
            task_id: "t".into(),
        }
    }

    #[test]
    fn cutoff_rounds_half_up() {
        let lens = |ls: &[usize]| ls.iter().map(|&l| matrix(l, 1, |_, _| 0.0)).collect::<Vec<_>>();
        assert_eq!(compute_cutoff(&lens(&[100, 200, 300])).unwrap().cutoff, 200);
        assert_eq!(compute_cutoff(&lens(&[3])).unwrap().cutoff, 3);
        assert_eq!(compute_cutoff(&lens(&[101, 150])).unwrap().cutoff, 126);
        assert_eq!(compute_cutoff(&lens(&[100, 101, 101])).unwrap().cutoff, 101);
        assert_eq!(compute_cutoff(&[]), Err(PreprocessError::EmptyDataset));
    }

    #[test]
    fn padding_and_truncation() {
        let fm = matrix(5, 2, |t, j| (t * 2 + j + 1) as f64);
        let padded = fit_length(&fm, LengthPolicy { cutoff: 8 });
        assert_eq!(padded.rows, 8);
        assert_eq!(padded.valid_rows, 5);
        assert_eq!(&padded.values[..10], &fm.values[..]);
        assert!(padded.values[10..].iter().all(|&v| v == 0.0));

        let same = fit_length(&matrix(8, 2, |t, _| t as f64), LengthPolicy { cutoff: 8 });
        assert_eq!(same, matrix(8, 2, |t, _| t as f64));

        let long = matrix(10, 3, |t, j| (t * 3 + j) as f64);
        let cut = fit_length(&long, LengthPolicy { cutoff: 6 });
        assert_eq!(cut.values, long.values[..18].to_vec());
        assert_eq!(cut.column_names, long.column_names);
    }

    #[test]
    fn percentile_on_one_to_hundred() {
        let col: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&col, 5.0) - 5.95).abs() < 1e-12);
        assert!((percentile(&col, 90.0) - 90.1).abs() < 1e-12);
        let stats = fit_normalization(&[matrix(100, 1, |t, _| (t + 1) as f64)], 5.0, 90.0).unwrap();
        assert!((stats.columns[0].low_clip - 5.95).abs() < 1e-12);
        assert!((stats.columns[0].high_clip - 90.1).abs() < 1e-12);
    }

    #[test]
    fn no_clipping_gives_plain_statistics() {
        let stats = fit_normalization(&[matrix(4, 1, |t, _| t as f64)], 0.0, 100.0).unwrap();
        let c = &stats.columns[0];
        assert_eq!(c.mean, 1.5);
        assert!((c.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.low_clip, f64::NEG_INFINITY);
        assert_eq!(stats.fitted_on, 1);
    }

    #[test]
    fn padding_rows_excluded_from_fit() {
        let fm = fit_length(&matrix(4, 1, |_, _| 10.0), LengthPolicy { cutoff: 9 });
        let stats = fit_normalization(std::slice::from_ref(&fm), 0.0, 100.0).unwrap();
        assert_eq!(stats.columns[0].mean, 10.0);
        assert_eq!(stats.columns[0].std, 1.0);
        // zero padding normalized like any value
        let out = apply_normalization(&fm, &stats).unwrap();
        assert_eq!(out.values[8], -10.0);
    }

    #[test]
    fn identity_and_degenerate_std() {
        let fm = matrix(6, 2, |t, j| (t as f64).sin() + j as f64);
        let id = NormalizationStats::identity(&fm.column_names);
        assert_eq!(apply_normalization(&fm, &id).unwrap(), fm);

        let constant = matrix(5, 1, |_, _| 3.0);
        let stats = fit_normalization(std::slice::from_ref(&constant), 0.0, 100.0).unwrap();
        assert_eq!(stats.columns[0].std, 1.0);
        let out = apply_normalization(&constant, &stats).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        assert_eq!(fit_normalization(&[], 5.0, 90.0), Err(PreprocessError::EmptyDataset));
        let fm = matrix(3, 1, |t, _| t as f64);
        assert!(matches!(fit_normalization(std::slice::from_ref(&fm), 90.0, 5.0), Err(PreprocessError::InvalidPercentiles(..))));
        assert!(fit_normalization(std::slice::from_ref(&fm), -1.0, 5.0).is_err());
        let stats = fit_normalization(&[fm], 0.0, 100.0).unwrap();
        let wide = matrix(3, 2, |_, _| 0.0);
        assert_eq!(
            apply_normalization(&wide, &stats),
            Err(PreprocessError::ColumnMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn stats_text_round_trip_is_exact() {
        let fms: Vec<_> = (0..3).map(|k| matrix(50, 3, |t, j| ((t * 7 + j * 13 + k) as f64).sqrt() / 3.0)).collect();
        for (lo, hi) in [(5.0, 90.0), (0.0, 100.0)] {
            let stats = fit_normalization(&fms, lo, hi).unwrap();
            let back = NormalizationStats::from_text(&stats.to_text()).unwrap();
            assert_eq!(back, stats);
        }
        assert!(NormalizationStats::from_text("garbage").is_err());
    }
}
