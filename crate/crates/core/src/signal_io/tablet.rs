use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};

use super::{tokens, Label, PenRecord, SignalError, SignalSequence, TABLET_SAMPLE_RATE_HZ};

const TABLET_ARITY: usize = 7;

/// A raw tablet field; also the channel name it is stored under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenField {
    X,
    Y,
    Timestamp,
    Pressure,
    TiltX,
    TiltY,
    Button,
}

impl PenField {
    /// Record field order.
    pub const ALL: [PenField; 7] = [
        PenField::X,
        PenField::Y,
        PenField::Timestamp,
        PenField::Pressure,
        PenField::TiltX,
        PenField::TiltY,
        PenField::Button,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenField::X => "x",
            PenField::Y => "y",
            PenField::Timestamp => "timestamp",
            PenField::Pressure => "pressure",
            PenField::TiltX => "tilt_x",
            PenField::TiltY => "tilt_y",
            PenField::Button => "button",
        }
    }

    pub(crate) fn get(self, r: &PenRecord) -> i64 {
        match self {
            PenField::X => r.x,
            PenField::Y => r.y,
            PenField::Timestamp => r.timestamp,
            PenField::Pressure => r.pressure,
            PenField::TiltX => r.tilt_x,
            PenField::TiltY => r.tilt_y,
            PenField::Button => r.button,
        }
    }

    fn set(self, r: &mut PenRecord, v: i64) {
        match self {
            PenField::X => r.x = v,
            PenField::Y => r.y = v,
            PenField::Timestamp => r.timestamp = v,
            PenField::Pressure => r.pressure = v,
            PenField::TiltX => r.tilt_x = v,
            PenField::TiltY => r.tilt_y = v,
            PenField::Button => r.button = v,
        }
    }
}

impl FromStr for PenField {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PenField::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| SignalError::InvalidColumnMap(format!("unknown field {s:?}")))
    }
}

/// On-disk column order of a tablet file.
///
/// The default is `x y timestamp button tilt_x tilt_y pressure`. This is a
/// convention for common tablet exports, not a property of any device.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PenField>", into = "Vec<PenField>")]
pub struct ColumnMap([PenField; 7]);

impl ColumnMap {
    pub fn new(fields: &[PenField]) -> Result<Self, SignalError> {
        if fields.len() != TABLET_ARITY {
            return Err(SignalError::InvalidColumnMap(format!(
                "expected {TABLET_ARITY} fields, got {}",
                fields.len()
            )));
        }
        for f in PenField::ALL {
            let n = fields.iter().filter(|&&g| g == f).count();
            if n != 1 {
                return Err(SignalError::InvalidColumnMap(format!("field {} appears {n} times", f.name())));
            }
        }
        let mut arr = [PenField::X; 7];
        arr.copy_from_slice(fields);
        Ok(Self(arr))
    }

    /// Columns in record field order.
    pub fn identity() -> Self {
        Self(PenField::ALL)
    }

    pub fn fields(&self) -> &[PenField; 7] {
        &self.0
    }
}

impl Default for ColumnMap {
    fn default() -> Self {
        use PenField::*;
        Self([X, Y, Timestamp, Button, TiltX, TiltY, Pressure])
    }
}

impl TryFrom<Vec<PenField>> for ColumnMap {
    type Error = SignalError;

    fn try_from(v: Vec<PenField>) -> Result<Self, Self::Error> {
        Self::new(&v)
    }
}

impl From<ColumnMap> for Vec<PenField> {
    fn from(m: ColumnMap) -> Self {
        m.0.to_vec()
    }
}

pub(crate) fn validate_record(r: &PenRecord, line: usize, prev_timestamp: i64) -> Result<(), SignalError> {
    if r.button != 0 && r.button != 1 {
        return Err(SignalError::InvalidValue { line, reason: format!("button {} not in {{0, 1}}", r.button) });
    }
    if r.pressure < 0 {
        return Err(SignalError::InvalidValue { line, reason: format!("negative pressure {}", r.pressure) });
    }
    if r.timestamp < prev_timestamp {
        return Err(SignalError::NonMonotonicTime(line));
    }
    Ok(())
}

/// Parses tablet text. Identifiers and label are attached by the caller.
pub fn parse_tablet_str(
    text: &str,
    column_map: &ColumnMap,
    subject_id: &str,
    task_id: &str,
    label: Label,
) -> Result<SignalSequence, SignalError> {
    let mut records = Vec::new();
    let mut prev_t = i64::MIN;
    let mut first_data_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != TABLET_ARITY {
            // a leading count or header line is tolerated once
            if first_data_line && line_no == 1 {
                warn!("skipping header line 1 ({} fields)", toks.len());
                first_data_line = false;
                continue;
            }
            return Err(SignalError::MalformedLine(line_no));
        }
        first_data_line = false;
        let mut rec = PenRecord::default();
        for (tok, field) in toks.iter().zip(column_map.fields()) {
            let v: i64 = tok.parse().map_err(|_| SignalError::MalformedLine(line_no))?;
            field.set(&mut rec, v);
        }
        validate_record(&rec, line_no, prev_t)?;
        prev_t = rec.timestamp;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(SignalError::EmptyFile);
    }
    let channels: IndexMap<String, Vec<f64>> = PenField::ALL
        .iter()
        .map(|&f| (f.name().to_string(), records.iter().map(|r| f.get(r) as f64).collect()))
        .collect();
    SignalSequence::new(subject_id, task_id, label, channels, TABLET_SAMPLE_RATE_HZ)
}

/// Parses a tablet file. Identifiers default to the file stem and the label to HC;
/// [`super::load_dataset`] overwrites both from the manifest.
pub fn parse_tablet_file(path: impl AsRef<Path>, column_map: &ColumnMap) -> Result<SignalSequence, SignalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SignalError::Io(e).in_file(path))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    parse_tablet_str(&text, column_map, stem, "", Label::Hc)
}

/// Serializes the tablet channels of `seq` in `column_map` order.
pub fn write_tablet_file(
    seq: &SignalSequence,
    column_map: &ColumnMap,
    path: impl AsRef<Path>,
) -> Result<(), SignalError> {
    let records = seq
        .pen_records()
        .ok_or_else(|| SignalError::InvalidParameter("sequence lacks tablet channels".into()))?;
    let mut out = String::with_capacity(records.len() * 32);
    for r in &records {
        let fields: Vec<String> = column_map.fields().iter().map(|f| f.get(r).to_string()).collect();
        writeln!(out, "{}", fields.join(" ")).expect("write to string");
    }
    std::fs::write(path, out)?;
    Ok(())
}
