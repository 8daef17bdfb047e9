use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::{tokens, Label, SignalError, SignalSequence, SMARTPEN_SAMPLE_RATE_HZ};

/// Smart-pen sensor channels in file order.
pub const SMARTPEN_CHANNELS: [&str; 6] =
    ["microphone", "finger_grip", "axial_pressure", "tilt_accel_x", "tilt_accel_y", "tilt_accel_z"];

pub fn parse_smartpen_str(
    text: &str,
    subject_id: &str,
    task_id: &str,
    label: Label,
) -> Result<SignalSequence, SignalError> {
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); SMARTPEN_CHANNELS.len()];
    for (idx, line) in text.lines().enumerate() {
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != SMARTPEN_CHANNELS.len() {
            return Err(SignalError::MalformedLine(idx + 1));
        }
        for (col, tok) in cols.iter_mut().zip(&toks) {
            let v: f64 = tok.parse().map_err(|_| SignalError::MalformedLine(idx + 1))?;
            if !v.is_finite() {
                return Err(SignalError::MalformedLine(idx + 1));
            }
            col.push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(SignalError::EmptyFile);
    }
    let channels: IndexMap<String, Vec<f64>> =
        SMARTPEN_CHANNELS.iter().map(|s| s.to_string()).zip(cols).collect();
    SignalSequence::new(subject_id, task_id, label, channels, SMARTPEN_SAMPLE_RATE_HZ)
}

/// Parses a six-channel smart-pen file. Length-1 files are accepted here.
pub fn parse_smartpen_file(path: impl AsRef<Path>) -> Result<SignalSequence, SignalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SignalError::Io(e).in_file(path))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    parse_smartpen_str(&text, stem, "", Label::Hc)
}

/// Writes values with shortest round-trip formatting, so parsing restores them exactly.
pub fn write_smartpen_file(seq: &SignalSequence, path: impl AsRef<Path>) -> Result<(), SignalError> {
    let cols: Vec<&[f64]> = SMARTPEN_CHANNELS
        .iter()
        .map(|c| seq.channel(c))
        .collect::<Option<_>>()
        .ok_or_else(|| SignalError::InvalidParameter("sequence lacks smart-pen channels".into()))?;
    let mut out = String::new();
    for i in 0..seq.len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{}", c[i])).collect();
        writeln!(out, "{}", row.join(" ")).expect("write to string");
    }
    std::fs::write(path, out)?;
    Ok(())
}
