//! Per-time-step handwriting features derived from raw pen channels.
//!
//! Every difference or derivative series is aligned with its source: entry 0 is
//! defined as 0 and entry `i` looks back to `i - 1`.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{Label, SignalSequence, SMARTPEN_CHANNELS};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sequence too short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("missing channel {0:?}")]
    MissingChannel(String),
    #[error("feature selection is empty")]
    EmptySelection,
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
    #[error("non-finite value in column {0:?}")]
    NonFinite(String),
    #[error("invalid time base: {0}")]
    InvalidTimeBase(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Raw,
    Inclination,
    Pressure,
    Kinematic,
    Derived,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Raw,
        FeatureGroup::Inclination,
        FeatureGroup::Pressure,
        FeatureGroup::Kinematic,
        FeatureGroup::Derived,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Raw => "raw",
            FeatureGroup::Inclination => "inclination",
            FeatureGroup::Pressure => "pressure",
            FeatureGroup::Kinematic => "kinematic",
            FeatureGroup::Derived => "derived",
        }
    }

    /// Column names contributed by this group on tablet data.
    pub fn tablet_columns(self, opts: &FeatureOptions) -> Vec<&'static str> {
        match self {
            FeatureGroup::Raw => RAW_COLUMNS.to_vec(),
            FeatureGroup::Inclination => vec!["tilt_x", "tilt_y"],
            FeatureGroup::Pressure => vec!["pressure", "pressure_rate"],
            FeatureGroup::Kinematic => KINEMATIC_COLUMNS.to_vec(),
            FeatureGroup::Derived => {
                let mut cols = KINEMATIC_COLUMNS.to_vec();
                if opts.include_raw_pressure_in_derived {
                    cols.push("pressure");
                }
                cols.push("pressure_rate");
                cols
            }
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FeatureError::UnknownGroup(s.to_string()))
    }
}

const RAW_COLUMNS: [&str; 6] = ["x", "y", "pressure", "tilt_x", "tilt_y", "button"];

/// Tangential, horizontal, vertical and cumulative-path kinematics, in that order.
pub const KINEMATIC_COLUMNS: [&str; 16] = [
    "displacement",
    "velocity",
    "acceleration",
    "jerk",
    "horizontal_displacement",
    "horizontal_velocity",
    "horizontal_acceleration",
    "horizontal_jerk",
    "vertical_displacement",
    "vertical_velocity",
    "vertical_acceleration",
    "vertical_jerk",
    "path_length",
    "path_speed",
    "path_acceleration",
    "path_jerk",
];

/// Non-empty set of feature groups; iteration is in canonical group order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureGroup>", into = "Vec<FeatureGroup>")]
pub struct FeatureGroupSelection(Vec<FeatureGroup>);

impl FeatureGroupSelection {
    pub fn new(groups: impl IntoIterator<Item = FeatureGroup>) -> Result<Self, FeatureError> {
        let mut v: Vec<FeatureGroup> = groups.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(FeatureError::EmptySelection);
        }
        Ok(Self(v))
    }

    pub fn single(group: FeatureGroup) -> Self {
        Self(vec![group])
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.0
    }

    fn needs_motion(&self) -> bool {
        self.0.iter().any(|g| matches!(g, FeatureGroup::Kinematic | FeatureGroup::Derived))
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|g| g.name()).collect::<Vec<_>>().join("+")
    }
}

impl TryFrom<Vec<FeatureGroup>> for FeatureGroupSelection {
    type Error = FeatureError;

    fn try_from(v: Vec<FeatureGroup>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FeatureGroupSelection> for Vec<FeatureGroup> {
    fn from(s: FeatureGroupSelection) -> Self {
        s.0
    }
}

impl FromStr for FeatureGroupSelection {
    type Err = FeatureError;

    /// Comma- or plus-separated group names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let groups = s
            .split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(groups)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Seconds per timestamp tick on tablet data.
    pub tick_seconds: f64,
    /// Adds raw pressure to the derived group.
    pub include_raw_pressure_in_derived: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { tick_seconds: 0.001, include_raw_pressure_in_derived: false }
    }
}

/// Converts device ticks into seconds, with a floor on each interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBase {
    pub tick_seconds: f64,
    /// Smallest interval used as a divisor; one nominal sample period.
    pub min_interval: f64,
}

impl TimeBase {
    pub fn new(tick_seconds: f64, sample_rate_hz: f64) -> Result<Self, FeatureError> {
        if !(tick_seconds > 0.0 && tick_seconds.is_finite()) {
            return Err(FeatureError::InvalidTimeBase(format!("tick {tick_seconds}")));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(FeatureError::InvalidTimeBase(format!("rate {sample_rate_hz}")));
        }
        Ok(Self { tick_seconds, min_interval: 1.0 / sample_rate_hz })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Row-major `rows x column_names.len()`.
    pub values: Vec<f64>,
    pub rows: usize,
    /// Leading rows that carry data; the remainder is padding.
    pub valid_rows: usize,
    pub column_names: Vec<String>,
    pub column_groups: Vec<FeatureGroup>,
    pub label: Label,
    pub subject_id: String,
    pub task_id: String,
}

impl FeatureMatrix {
    pub fn cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.cols();
        &self.values[t * m..(t + 1) * m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.values[t * self.cols() + j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_names.iter().position(|c| c == name).map(|j| self.column(j))
    }

    /// Number of columns tagged with each group.
    pub fn group_counts(&self) -> Vec<(FeatureGroup, usize)> {
        FeatureGroup::ALL
            .iter()
            .map(|&g| (g, self.column_groups.iter().filter(|&&c| c == g).count()))
            .filter(|&(_, n)| n > 0)
            .collect()
    }

    /// CSV with a header of column names; values use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.column_names.join(",");
        out.push('\n');
        for t in 0..self.rows {
            let row: Vec<String> = self.row(t).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", row.join(",")).expect("write to string");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Euclidean distance between consecutive points; the first entry is 0.
pub fn displacement(x: &[f64], y: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooShort { len: x.len(), min: 2 });
    }
    let mut d = Vec::with_capacity(x.len());
    d.push(0.0);
    d.extend((1..x.len()).map(|i| (x[i] - x[i - 1]).hypot(y[i] - y[i - 1])));
    Ok(d)
}

/// Signed step along one axis; the first entry is 0.
pub fn directional_displacement(c: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if c.len() < 2 {
        return Err(FeatureError::TooShort { len: c.len(), min: 2 });
    }
    Ok(difference(c))
}

fn difference(c: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(c.len());
    if !c.is_empty() {
        d.push(0.0);
    }
    d.extend(c.windows(2).map(|w| w[1] - w[0]));
    d
}

/// Backward difference quotient over actual timestamp intervals, floored at
/// `time.min_interval`; the first entry is 0.
pub fn time_derivative(s: &[f64], timestamps: &[f64], time: &TimeBase) -> Result<Vec<f64>, FeatureError> {
    if s.len() != timestamps.len() {
        return Err(FeatureError::LengthMismatch(s.len(), timestamps.len()));
    }
    let mut out = Vec::with_capacity(s.len());
    if !s.is_empty() {
        out.push(0.0);
    }
    for i in 1..s.len() {
        let dt = ((timestamps[i] - timestamps[i - 1]) * time.tick_seconds).max(time.min_interval);
        out.push((s[i] - s[i - 1]) / dt);
    }
    Ok(out)
}

fn cumulative(d: &[f64]) -> Vec<f64> {
    d.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Computes every tablet-derived column once; assembly then picks by name.
struct TabletColumns<'a> {
    seq: &'a SignalSequence,
    time: TimeBase,
    kinematic: Option<Vec<Vec<f64>>>,
}

impl<'a> TabletColumns<'a> {
    fn channel(&self, name: &str) -> Result<&'a [f64], FeatureError> {
        self.seq.channel(name).ok_or_else(|| FeatureError::MissingChannel(name.to_string()))
    }

    fn kinematics(&mut self) -> Result<&[Vec<f64>], FeatureError> {
        if self.kinematic.is_none() {
            let x = self.channel("x")?;
            let y = self.channel("y")?;
            let ts = self.channel("timestamp")?;
            let chain = |base: Vec<f64>| -> Result<[Vec<f64>; 4], FeatureError> {
                let v = time_derivative(&base, ts, &self.time)?;
                let a = time_derivative(&v, ts, &self.time)?;
                let j = time_derivative(&a, ts, &self.time)?;
                Ok([base, v, a, j])
            };
            let d = displacement(x, y)?;
            let path = cumulative(&d);
            let mut cols = Vec::with_capacity(16);
            cols.extend(chain(d)?);
            cols.extend(chain(directional_displacement(x)?)?);
            cols.extend(chain(directional_displacement(y)?)?);
            cols.extend(chain(path)?);
            self.kinematic = Some(cols);
        }
        Ok(self.kinematic.as_deref().expect("just computed"))
    }

    fn column(&mut self, name: &str) -> Result<Vec<f64>, FeatureError> {
        if let Some(k) = KINEMATIC_COLUMNS.iter().position(|&c| c == name) {
            return Ok(self.kinematics()?[k].clone());
        }
        if name == "pressure_rate" {
            let p = self.channel("pressure")?;
            let ts = self.channel("timestamp")?;
            return time_derivative(p, ts, &self.time);
        }
        Ok(self.channel(name)?.to_vec())
    }
}

fn is_smartpen(seq: &SignalSequence) -> bool {
    seq.channel("x").is_none() && SMARTPEN_CHANNELS.iter().all(|c| seq.channel(c).is_some())
}

/// Builds the feature matrix for the selected groups. Columns shared between
/// groups appear once, tagged with the first selected group that lists them.
pub fn assemble_features(
    seq: &SignalSequence,
    selection: &FeatureGroupSelection,
    opts: &FeatureOptions,
) -> Result<FeatureMatrix, FeatureError> {
    let len = seq.len();
    let min = if selection.needs_motion() { 4 } else { 2 };
    if len < min {
        return Err(FeatureError::TooShort { len, min });
    }

    let mut names: Vec<String> = Vec::new();
    let mut groups: Vec<FeatureGroup> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();

    if is_smartpen(seq) {
        // only the sensor channels exist; no position means no kinematics
        for &g in selection.groups() {
            if g != FeatureGroup::Raw {
                let missing = if g == FeatureGroup::Inclination { "tilt_x" } else { "x" };
                return Err(FeatureError::MissingChannel(missing.into()));
            }
        }
        for &c in &SMARTPEN_CHANNELS {
            names.push(c.to_string());
            groups.push(FeatureGroup::Raw);
            columns.push(seq.channel(c).expect("checked").to_vec());
        }
    } else {
        let mut src = TabletColumns { seq, time: TimeBase::new(opts.tick_seconds, seq.sample_rate_hz)?, kinematic: None };
        let mut seen = HashSet::new();
        for &g in selection.groups() {
            for c in g.tablet_columns(opts) {
                if seen.insert(c) {
                    columns.push(src.column(c)?);
                    names.push(c.to_string());
                    groups.push(g);
                }
            }
        }
    }

    for (name, col) in names.iter().zip(&columns) {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(name.clone()));
        }
    }
    let m = columns.len();
    let mut values = vec![0.0; len * m];
    for (j, col) in columns.iter().enumerate() {
        for (t, &v) in col.iter().enumerate() {
            values[t * m + j] = v;
        }
    }
    Ok(FeatureMatrix {
        values,
        rows: len,
        valid_rows: len,
        column_names: names,
        column_groups: groups,
        label: seq.label,
        subject_id: seq.subject_id.clone(),
        task_id: seq.task_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{PenRecord, SignalSequence};

    fn still_sequence(len: usize) -> SignalSequence {
        let recs: Vec<PenRecord> = (0..len)
            .map(|i| PenRecord { x: 10, y: 20, timestamp: 5 * i as i64, pressure: 300, tilt_x: 1, tilt_y: 2, button: 1 })
            .collect();
        SignalSequence::from_pen_records("s", "t", Label::Hc, &recs).unwrap()
    }

    #[test]
    fn displacement_examples() {
        assert_eq!(displacement(&[0.0, 3.0], &[0.0, 4.0]).unwrap(), vec![0.0, 5.0]);
        assert_eq!(displacement(&[2.0; 10], &[7.0; 10]).unwrap(), vec![0.0; 10]);
        assert_eq!(displacement(&[0.0], &[0.0]), Err(FeatureError::TooShort { len: 1, min: 2 }));
        assert_eq!(displacement(&[0.0, 1.0], &[0.0]), Err(FeatureError::LengthMismatch(2, 1)));
    }

    #[test]
    fn directional_examples() {
        assert_eq!(directional_displacement(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(directional_displacement(&[0.0, 2.0, 1.0]).unwrap(), vec![0.0, 2.0, -1.0]);
        assert!(directional_displacement(&[1.0]).is_err());
    }

    #[test]
    fn derivative_at_200hz() {
        let tb = TimeBase::new(0.001, 200.0).unwrap();
        let d = time_derivative(&[0.0, 1.0, 2.0], &[0.0, 5.0, 10.0], &tb).unwrap();
        assert_eq!(d, vec![0.0, 200.0, 200.0]);
        assert_eq!(time_derivative(&[3.0; 5], &[0.0, 5.0, 10.0, 15.0, 20.0], &tb).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn repeated_ticks_use_floor() {
        let tb = TimeBase::new(0.001, 200.0).unwrap();
        let d = time_derivative(&[0.0, 1.0], &[7.0, 7.0], &tb).unwrap();
        assert_eq!(d, vec![0.0, 200.0]);
    }

    #[test]
    fn group_sizes() {
        let seq = still_sequence(10);
        let opts = FeatureOptions::default();
        for (g, n) in [
            (FeatureGroup::Raw, 6),
            (FeatureGroup::Inclination, 2),
            (FeatureGroup::Pressure, 2),
            (FeatureGroup::Kinematic, 16),
            (FeatureGroup::Derived, 17),
        ] {
            let fm = assemble_features(&seq, &FeatureGroupSelection::single(g), &opts).unwrap();
            assert_eq!(fm.cols(), n, "{g}");
            assert!(fm.column_groups.iter().all(|&c| c == g));
        }
        let opts = FeatureOptions { include_raw_pressure_in_derived: true, ..Default::default() };
        let fm = assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Derived), &opts).unwrap();
        assert_eq!(fm.cols(), 18);
    }

    #[test]
    fn overlapping_groups_deduplicated() {
        let seq = still_sequence(10);
        let sel: FeatureGroupSelection = "inclination,raw".parse().unwrap();
        let fm = assemble_features(&seq, &sel, &FeatureOptions::default()).unwrap();
        assert_eq!(fm.cols(), 6);
        assert!(fm.column_groups.iter().all(|&g| g == FeatureGroup::Raw));
        let sel: FeatureGroupSelection = "pressure+derived".parse().unwrap();
        let fm = assemble_features(&seq, &sel, &FeatureOptions::default()).unwrap();
        assert_eq!(fm.cols(), 18);
        assert_eq!(fm.group_counts(), vec![(FeatureGroup::Pressure, 2), (FeatureGroup::Derived, 16)]);
    }

    #[test]
    fn still_pen_has_zero_derived_features() {
        let seq = still_sequence(12);
        let fm = assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Derived), &FeatureOptions::default())
            .unwrap();
        assert!(fm.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_sequences_rejected() {
        let seq = still_sequence(3);
        let err =
            assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Kinematic), &FeatureOptions::default())
                .unwrap_err();
        assert_eq!(err, FeatureError::TooShort { len: 3, min: 4 });
        assert!(assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Raw), &FeatureOptions::default())
            .is_ok());
        let seq = still_sequence(1);
        assert!(assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Raw), &FeatureOptions::default())
            .is_err());
    }

    #[test]
    fn smartpen_exposes_raw_only() {
        let seq = crate::signal_io::parse_smartpen_str("1 2 3 4 5 6\n2 3 4 5 6 7\n", "s", "t", Label::Pd).unwrap();
        let fm = assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Raw), &FeatureOptions::default())
            .unwrap();
        assert_eq!(fm.cols(), 6);
        assert_eq!(fm.row(1), &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let seq = crate::signal_io::parse_smartpen_str(&"1 2 3 4 5 6\n".repeat(5), "s", "t", Label::Pd).unwrap();
        let err = assemble_features(
            &seq,
            &FeatureGroupSelection::single(FeatureGroup::Kinematic),
            &FeatureOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, FeatureError::MissingChannel(_)));
    }

    #[test]
    fn missing_tablet_channel() {
        let mut seq = still_sequence(10);
        seq.channels.shift_remove("timestamp");
        let err =
            assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Pressure), &FeatureOptions::default())
                .unwrap_err();
        assert_eq!(err, FeatureError::MissingChannel("timestamp".into()));
    }

    #[test]
    fn selection_parsing() {
        assert!("".parse::<FeatureGroupSelection>().is_err());
        assert!("raw,bogus".parse::<FeatureGroupSelection>().is_err());
        let s: FeatureGroupSelection = "Derived".parse().unwrap();
        assert_eq!(s.groups(), &[FeatureGroup::Derived]);
    }

    #[test]
    fn csv_dump() {
        let seq = still_sequence(4);
        let fm = assemble_features(&seq, &FeatureGroupSelection::single(FeatureGroup::Inclination), &FeatureOptions::default())
            .unwrap();
        assert_eq!(fm.to_csv(), "tilt_x,tilt_y\n1,2\n1,2\n1,2\n1,2\n");
    }
}
