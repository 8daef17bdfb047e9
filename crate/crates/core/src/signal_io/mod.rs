//! Ingestion of raw pen signals.
//!
//! Two on-disk layouts are supported: tablet exports (seven integer fields per
//! sample) and smart-pen exports (six real-valued sensor channels per sample).
//! Both parse into a [`SignalSequence`], the channel-oriented representation the
//! rest of the pipeline consumes.

mod manifest;
mod smartpen;
mod synthetic;
mod tablet;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_dataset, read_manifest, write_manifest, DatasetFormat, DatasetManifest, ManifestEntry};
pub use smartpen::{parse_smartpen_file, parse_smartpen_str, write_smartpen_file, SMARTPEN_CHANNELS};
pub use synthetic::{generate_synthetic, SyntheticParams};
pub use tablet::{parse_tablet_file, parse_tablet_str, write_tablet_file, ColumnMap, PenField};

/// Nominal tablet sampling rate.
pub const TABLET_SAMPLE_RATE_HZ: f64 = 200.0;
/// Rate attached to smart-pen recordings, which carry no timestamps.
pub const SMARTPEN_SAMPLE_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("malformed line {0}")]
    MalformedLine(usize),
    #[error("invalid value on line {line}: {reason}")]
    InvalidValue { line: usize, reason: String },
    #[error("file contains no data lines")]
    EmptyFile,
    #[error("timestamp decreases on line {0}")]
    NonMonotonicTime(usize),
    #[error("invalid range: min {min} > max {max}")]
    InvalidRange { min: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid column map: {0}")]
    InvalidColumnMap(String),
    #[error("duplicate manifest entry for subject {subject_id}, task {task_id}")]
    DuplicateEntry { subject_id: String, task_id: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<SignalError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SignalError {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        SignalError::InFile { path: path.into(), source: Box::new(self) }
    }
}

/// Diagnostic class. PD is the positive class everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "PD")]
    Pd,
    #[serde(rename = "HC")]
    Hc,
}

impl Label {
    /// 1.0 for PD, 0.0 for HC.
    pub fn target(self) -> f64 {
        match self {
            Label::Pd => 1.0,
            Label::Hc => 0.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Pd
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Pd => write!(f, "PD"),
            Label::Hc => write!(f, "HC"),
        }
    }
}

impl FromStr for Label {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PD" => Ok(Label::Pd),
            "HC" => Ok(Label::Hc),
            other => Err(SignalError::Manifest(format!("unknown label {other:?}"))),
        }
    }
}

/// One time-step of raw tablet acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PenRecord {
    pub x: i64,
    pub y: i64,
    pub timestamp: i64,
    pub pressure: i64,
    pub tilt_x: i64,
    pub tilt_y: i64,
    /// 0 in-air, 1 on-surface.
    pub button: i64,
}

/// One task performance by one subject: equally long named channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSequence {
    pub subject_id: String,
    pub task_id: String,
    pub label: Label,
    pub channels: IndexMap<String, Vec<f64>>,
    pub sample_rate_hz: f64,
}

impl SignalSequence {
    /// Builds a sequence, checking that all channels share one length.
    pub fn new(
        subject_id: impl Into<String>,
        task_id: impl Into<String>,
        label: Label,
        channels: IndexMap<String, Vec<f64>>,
        sample_rate_hz: f64,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(SignalError::InvalidParameter(format!("sample rate {sample_rate_hz}")));
        }
        let mut lengths = channels.values().map(Vec::len);
        if let Some(first) = lengths.next() {
            if lengths.any(|l| l != first) {
                return Err(SignalError::InvalidParameter("channels differ in length".into()));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            task_id: task_id.into(),
            label,
            channels,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    /// Reassembles tablet records, if the tablet channel set is present.
    pub fn pen_records(&self) -> Option<Vec<PenRecord>> {
        let get = |f: PenField| self.channel(f.name());
        let cols: Vec<&[f64]> = PenField::ALL.iter().map(|&f| get(f)).collect::<Option<_>>()?;
        Some(
            (0..self.len())
                .map(|i| PenRecord {
                    x: cols[0][i] as i64,
                    y: cols[1][i] as i64,
                    timestamp: cols[2][i] as i64,
                    pressure: cols[3][i] as i64,
                    tilt_x: cols[4][i] as i64,
                    tilt_y: cols[5][i] as i64,
                    button: cols[6][i] as i64,
                })
                .collect(),
        )
    }

    /// Builds a tablet sequence from records, validating the record invariants.
    pub fn from_pen_records(
        subject_id: impl Into<String>,
        task_id: impl Into<String>,
        label: Label,
        records: &[PenRecord],
    ) -> Result<Self, SignalError> {
        let mut prev_t = i64::MIN;
        for (i, r) in records.iter().enumerate() {
            tablet::validate_record(r, i + 1, prev_t)?;
            prev_t = r.timestamp;
        }
        let channels = PenField::ALL
            .iter()
            .map(|&f| (f.name().to_string(), records.iter().map(|r| f.get(r) as f64).collect()))
            .collect();
        Self::new(subject_id, task_id, label, channels, TABLET_SAMPLE_RATE_HZ)
    }
}

/// Splits a data line into whitespace-separated tokens.
pub(crate) fn tokens(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing_is_case_insensitive() {
        assert_eq!("pd".parse::<Label>().unwrap(), Label::Pd);
        assert_eq!(" Hc ".parse::<Label>().unwrap(), Label::Hc);
        assert!("control".parse::<Label>().is_err());
    }

    #[test]
    fn unequal_channels_rejected() {
        let mut ch = IndexMap::new();
        ch.insert("a".to_string(), vec![0.0, 1.0]);
        ch.insert("b".to_string(), vec![0.0]);
        assert!(SignalSequence::new("s", "t", Label::Hc, ch, 200.0).is_err());
    }

    #[test]
    fn pen_records_round_trip() {
        let recs = vec![
            PenRecord { x: 1, y: 2, timestamp: 0, pressure: 10, tilt_x: 3, tilt_y: 4, button: 1 },
            PenRecord { x: 2, y: 2, timestamp: 5, pressure: 0, tilt_x: 3, tilt_y: 4, button: 0 },
        ];
        let seq = SignalSequence::from_pen_records("s", "t", Label::Pd, &recs).unwrap();
        assert_eq!(seq.pen_records().unwrap(), recs);
    }

    #[test]
    fn record_invariants_enforced() {
        let bad = [PenRecord { button: 2, ..Default::default() }];
        assert!(SignalSequence::from_pen_records("s", "t", Label::Pd, &bad).is_err());
        let bad = [PenRecord { pressure: -1, ..Default::default() }];
        assert!(SignalSequence::from_pen_records("s", "t", Label::Pd, &bad).is_err());
    }
}
