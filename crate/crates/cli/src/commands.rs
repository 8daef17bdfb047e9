use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hwpd::eval::{
    emit_roc, featurize, run_ablation_grid, run_experiment, ExperimentReport, FittedModel, TaskReport, THRESHOLD,
};
use hwpd::features::{FeatureGroupSelection, FeatureOptions};
use hwpd::nn::Checkpoint;
use hwpd::preprocess::{LengthPolicy, NormalizationStats, Preprocessor};
use hwpd::signal_io::{
    generate_synthetic, parse_smartpen_file, parse_tablet_file, write_manifest, write_tablet_file, ColumnMap,
    DatasetFormat, DatasetManifest, Label, ManifestEntry, PenField, SyntheticParams,
};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Keeps identifiers usable as file names.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturesSummary {
    pub files: Vec<PathBuf>,
    /// `(group, columns)` of the first matrix; every matrix shares them.
    pub group_counts: Vec<(String, usize)>,
    pub total_columns: usize,
}

impl FeaturesSummary {
    pub fn line(&self) -> String {
        let groups: Vec<String> = self.group_counts.iter().map(|(g, n)| format!("{g}={n}")).collect();
        format!("wrote {} files; columns {} ({})", self.files.len(), self.total_columns, groups.join(" "))
    }
}

/// One feature CSV per (subject, task).
pub fn cmd_features(cfg: &ExperimentConfig) -> Result<FeaturesSummary, CliError> {
    let out = cfg.out_dir()?;
    let seqs = cfg.load_sequences()?;
    if seqs.is_empty() {
        log::warn!("dataset is empty; no feature files written");
    }
    let fms = featurize(&seqs, &cfg.features.groups, &cfg.features.options())?;
    create_dir(out)?;
    let mut files = Vec::with_capacity(fms.len());
    for fm in &fms {
        let path = out.join(format!("{}_{}.csv", file_stem(&fm.subject_id), file_stem(&fm.task_id)));
        write(&path, &fm.to_csv())?;
        files.push(path);
    }
    let (group_counts, total_columns) = match fms.first() {
        Some(fm) => (fm.group_counts().into_iter().map(|(g, n)| (g.to_string(), n)).collect(), fm.cols()),
        None => (Vec::new(), 0),
    };
    Ok(FeaturesSummary { files, group_counts, total_columns })
}

/// Names of the per-task artifacts written by `train`.
pub fn checkpoint_path(out: &Path, task_id: &str) -> PathBuf {
    out.join(format!("model_{}.ckpt", file_stem(task_id)))
}

pub fn roc_path(out: &Path, task_id: &str) -> PathBuf {
    out.join(format!("roc_{}.csv", file_stem(task_id)))
}

fn normalization_file(task_id: &str) -> String {
    format!("normalization_{}.tsv", file_stem(task_id))
}

/// Runs the configured protocol and writes `report.json`, `report.txt`, a ROC
/// CSV per task and, per task, the last split's checkpoint with its
/// normalization statistics.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let out = cfg.out_dir()?;
    let started = Instant::now();
    let seqs = cfg.load_sequences()?;
    let setup = cfg.setup();
    let results = run_experiment(&seqs, &setup)?;
    create_dir(out)?;
    let mut report = ExperimentReport::new(cfg.echo(), &setup);
    for (task, fitted) in results {
        emit_roc(&task, &roc_path(out, &task.task_id)).map_err(|e| CliError::Data(e.to_string()))?;
        save_fitted(cfg, out, &task, &fitted)?;
        report.tasks.push(task);
    }
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_report(out, "report", &report)?;
    Ok(report)
}

fn save_fitted(cfg: &ExperimentConfig, out: &Path, task: &TaskReport, fitted: &FittedModel) -> Result<(), CliError> {
    let norm = normalization_file(&task.task_id);
    fitted.preprocessor.stats.save(out.join(&norm))?;
    let (format, map) = cfg.input_format();
    let mut ck = Checkpoint::new(fitted.model.clone());
    let meta = [
        ("task_id", task.task_id.clone()),
        ("tool_version", hwpd::eval::TOOL_VERSION.to_string()),
        ("feature_groups", cfg.features.groups.label()),
        ("tick_seconds", cfg.features.tick_seconds.to_string()),
        ("include_raw_pressure_in_derived", cfg.features.include_raw_pressure_in_derived.to_string()),
        ("cutoff", fitted.preprocessor.cutoff.cutoff.to_string()),
        ("normalization", norm),
        ("format", serde_json::to_string(&format).expect("format serializes").trim_matches('"').to_string()),
        ("column_map", map.fields().iter().map(|f| f.name()).collect::<Vec<_>>().join(",")),
    ];
    ck.metadata.extend(meta.into_iter().map(|(k, v)| (k.to_string(), v)));
    ck.save(&checkpoint_path(out, &task.task_id))?;
    Ok(())
}

fn write_report(out: &Path, stem: &str, report: &ExperimentReport) -> Result<(), CliError> {
    write(&out.join(format!("{stem}.json")), &report.to_json().map_err(|e| CliError::Data(e.to_string()))?)?;
    write(&out.join(format!("{stem}.txt")), &report.render_table())
}

/// The 3 x 2 grid of recurrent cell type by convolution, written to
/// `ablation.json` and `ablation.txt`.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let out = cfg.out_dir()?;
    let started = Instant::now();
    let seqs = cfg.load_sequences()?;
    let setup = cfg.setup();
    let grid = run_ablation_grid(&seqs, &setup)?;
    create_dir(out)?;
    let mut report = ExperimentReport::new(cfg.echo(), &setup);
    report.ablation = Some(grid);
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_report(out, "ablation", &report)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub probability: f64,
    pub label: Label,
}

impl Score {
    pub fn line(&self) -> String {
        format!("P(PD)={:.4} label={}", self.probability, self.label)
    }
}

fn meta<'a>(ck: &'a Checkpoint, key: &str) -> Result<&'a str, CliError> {
    ck.metadata
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Data(format!("checkpoint metadata lacks {key:?}")))
}

fn meta_parse<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T, CliError> {
    meta(ck, key)?.parse().map_err(|_| CliError::Data(format!("checkpoint metadata {key:?} is malformed")))
}

/// Scores one recording with a checkpoint written by `train`, replaying the
/// training-time feature extraction, cutoff and normalization.
pub fn cmd_score(checkpoint: &Path, input: &Path) -> Result<Score, CliError> {
    let ck = Checkpoint::load(checkpoint, None)?;
    let base = checkpoint.parent().unwrap_or(Path::new("."));
    let stats = NormalizationStats::load(base.join(meta(&ck, "normalization")?))?;
    let selection: FeatureGroupSelection = meta_parse(&ck, "feature_groups")?;
    let opts = FeatureOptions {
        tick_seconds: meta_parse(&ck, "tick_seconds")?,
        include_raw_pressure_in_derived: meta_parse(&ck, "include_raw_pressure_in_derived")?,
    };
    let format: DatasetFormat = serde_json::from_value(serde_json::Value::String(meta(&ck, "format")?.into()))
        .map_err(|e| CliError::Data(format!("checkpoint format: {e}")))?;
    let fields = meta(&ck, "column_map")?
        .split(',')
        .map(|f| f.parse())
        .collect::<Result<Vec<PenField>, _>>()
        .map_err(|e| CliError::Data(format!("checkpoint column map: {e}")))?;
    let seq = match format {
        DatasetFormat::SmartpenChannels => parse_smartpen_file(input)?,
        _ => parse_tablet_file(input, &ColumnMap::new(&fields)?)?,
    };
    let fm = hwpd::features::assemble_features(&seq, &selection, &opts)?;
    let cutoff = LengthPolicy { cutoff: meta_parse(&ck, "cutoff")? };
    let fitted = FittedModel {
        task_id: meta(&ck, "task_id")?.to_string(),
        model: ck.model,
        preprocessor: Preprocessor { cutoff, stats },
    };
    let probability = fitted.score(&fm)?;
    Ok(Score { probability, label: if probability >= THRESHOLD { Label::Pd } else { Label::Hc } })
}

/// Writes generated recordings as tablet files plus a `manifest.csv` listing them.
pub fn cmd_synth(params: &SyntheticParams, out: &Path) -> Result<PathBuf, CliError> {
    let seqs = generate_synthetic(params).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(out)?;
    let map = ColumnMap::default();
    let mut entries = Vec::with_capacity(seqs.len());
    for s in &seqs {
        let name = format!("{}_{}.svc", file_stem(&s.subject_id), file_stem(&s.task_id));
        write_tablet_file(s, &map, out.join(&name))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(name),
            subject_id: s.subject_id.clone(),
            task_id: s.task_id.clone(),
            label: s.label,
        });
    }
    let manifest = out.join("manifest.csv");
    write_manifest(&DatasetManifest::new(entries, DatasetFormat::Synthetic), &manifest)?;
    Ok(manifest)
}
