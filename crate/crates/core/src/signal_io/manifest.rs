use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_smartpen_file, parse_tablet_file, ColumnMap, Label, SignalError, SignalSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    TabletSvc,
    SmartpenChannels,
    /// Generator output written in tablet layout with the default column map.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub task_id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub format: DatasetFormat,
    #[serde(default)]
    pub column_map: ColumnMap,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, format: DatasetFormat) -> Self {
        Self { entries, format, column_map: ColumnMap::default() }
    }

    fn check_unique(&self) -> Result<(), SignalError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((e.subject_id.as_str(), e.task_id.as_str())) {
                return Err(SignalError::DuplicateEntry {
                    subject_id: e.subject_id.clone(),
                    task_id: e.task_id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    subject_id: String,
    task_id: String,
    label: String,
}

/// Reads a `path,subject_id,task_id,label` CSV. Relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>, format: DatasetFormat) -> Result<DatasetManifest, SignalError> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SignalError::Manifest(e.to_string()).in_file(path))?;
    let headers = reader.headers().map_err(|e| SignalError::Manifest(e.to_string()).in_file(path))?;
    if headers.iter().collect::<Vec<_>>() != ["path", "subject_id", "task_id", "label"] {
        return Err(SignalError::Manifest("header must be path,subject_id,task_id,label".into()).in_file(path));
    }
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| SignalError::Manifest(e.to_string()).in_file(path))?;
        let p = PathBuf::from(&row.path);
        entries.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            subject_id: row.subject_id,
            task_id: row.task_id,
            label: row.label.parse().map_err(|e: SignalError| e.in_file(path))?,
        });
    }
    Ok(DatasetManifest::new(entries, format))
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), SignalError> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| SignalError::Manifest(e.to_string()))?;
    let err = |e: csv::Error| SignalError::Manifest(e.to_string());
    w.write_record(["path", "subject_id", "task_id", "label"]).map_err(err)?;
    for e in &manifest.entries {
        w.write_record([
            e.path.to_string_lossy().as_ref(),
            e.subject_id.as_str(),
            e.task_id.as_str(),
            e.label.to_string().as_str(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses every manifest entry (in parallel) and attaches identifiers and labels.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<SignalSequence>, SignalError> {
    manifest.check_unique()?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let parsed = match manifest.format {
                DatasetFormat::TabletSvc => parse_tablet_file(&e.path, &manifest.column_map),
                DatasetFormat::Synthetic => parse_tablet_file(&e.path, &ColumnMap::default()),
                DatasetFormat::SmartpenChannels => parse_smartpen_file(&e.path),
            };
            let mut seq = parsed.map_err(|err| match err {
                SignalError::InFile { .. } => err,
                other => other.in_file(&e.path),
            })?;
            seq.subject_id = e.subject_id.clone();
            seq.task_id = e.task_id.clone();
            seq.label = e.label;
            Ok(seq)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_loads_nothing() {
        let m = DatasetManifest::new(vec![], DatasetFormat::TabletSvc);
        assert!(load_dataset(&m).unwrap().is_empty());
    }

    #[test]
    fn duplicate_rows_rejected() {
        let e = ManifestEntry {
            path: "a.svc".into(),
            subject_id: "s1".into(),
            task_id: "spiral".into(),
            label: Label::Pd,
        };
        let m = DatasetManifest::new(vec![e.clone(), e], DatasetFormat::TabletSvc);
        assert!(matches!(load_dataset(&m), Err(SignalError::DuplicateEntry { .. })));
    }

    #[test]
    fn parse_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.svc");
        std::fs::write(&f, "0 0 0 1 0 0 1\nnope\n").unwrap();
        let m = DatasetManifest::new(
            vec![ManifestEntry { path: f.clone(), subject_id: "s".into(), task_id: "t".into(), label: Label::Hc }],
            DatasetFormat::TabletSvc,
        );
        let err = load_dataset(&m).unwrap_err();
        match err {
            SignalError::InFile { path, source } => {
                assert_eq!(path, f);
                assert!(matches!(*source, SignalError::MalformedLine(2)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
