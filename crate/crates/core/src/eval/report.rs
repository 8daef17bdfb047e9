//! Experiment reports: JSON, fixed-width tables and ROC CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{AblationReport, ExperimentSetup, TaskReport, ABLATION_CELLS};
use super::metrics::THRESHOLD;
use super::EvalError;
use crate::preprocess::CutoffScope;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every choice the method description leaves open, echoed into each report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignFlags {
    pub stratified_splits: bool,
    pub subject_wise_splits: bool,
    pub cutoff_scope: CutoffScope,
    pub cutoff_rounding: String,
    pub normalization: bool,
    pub normalization_rows: String,
    pub clip_percentiles: (f64, f64),
    pub include_raw_pressure_in_derived: bool,
    pub tick_seconds: f64,
    pub cv_validation_fraction: Option<f64>,
    pub stopping_rule: String,
    pub restore_best_on_early_stop: bool,
    pub holdout_rounding: String,
    pub holdout_runs_reseeded: bool,
    pub dropout_placement: String,
    pub recurrent_dropout: String,
    pub head_input: String,
    pub initialization: String,
    pub classification_threshold: f64,
    pub label_shuffle: bool,
}

impl DesignFlags {
    pub fn from_setup(setup: &ExperimentSetup) -> Self {
        let train = &setup.train;
        let stopping_rule = match train.early_stop_patience {
            Some(p) => format!(
                "early stopping on validation loss (patience {p}, max {} epochs) when a validation split exists, otherwise fixed epochs",
                train.epochs
            ),
            None => format!("fixed {} epochs", train.epochs),
        };
        Self {
            stratified_splits: true,
            subject_wise_splits: true,
            cutoff_scope: setup.options.cutoff_scope,
            cutoff_rounding: "mean length rounded half up".into(),
            normalization: setup.options.normalize,
            normalization_rows: "fitted on unpadded training rows, applied to all rows".into(),
            clip_percentiles: setup.options.clip_percentiles,
            include_raw_pressure_in_derived: setup.features.include_raw_pressure_in_derived,
            tick_seconds: setup.features.tick_seconds,
            cv_validation_fraction: setup.plan.cv_validation_fraction,
            stopping_rule,
            restore_best_on_early_stop: true,
            holdout_rounding: "train rounds half up, validation rounds down, test is the remainder".into(),
            holdout_runs_reseeded: true,
            dropout_placement: "input of the second recurrent layer".into(),
            recurrent_dropout: "one mask per sequence and direction on the recurrent state".into(),
            head_input: "final state of each direction".into(),
            initialization: "glorot uniform inputs, orthogonal recurrent, zero biases".into(),
            classification_threshold: THRESHOLD,
            label_shuffle: setup.options.label_shuffle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub seed: u64,
    /// The fully resolved configuration.
    pub config: serde_json::Value,
    pub design_flags: DesignFlags,
    pub tasks: Vec<TaskReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn new(config: serde_json::Value, setup: &ExperimentSetup) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            seed: setup.train.seed,
            config,
            design_flags: DesignFlags::from_setup(setup),
            tasks: Vec::new(),
            ablation: None,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Task table followed by the ablation grid when present.
    pub fn render_table(&self) -> String {
        let mut out = render_task_table(&self.tasks);
        if let Some(a) = &self.ablation {
            out.push('\n');
            out.push_str(&render_ablation_table(a));
        }
        out
    }
}

/// Removes every `*_seconds` field, leaving what must be reproducible.
pub fn strip_wall_clock(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_seconds"));
            map.values_mut().for_each(strip_wall_clock);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn render_task_table(tasks: &[TaskReport]) -> String {
    let mut out = format!(
        "{:<14} {:<24} {:<14} {:>8} {:>8} {:>8} {:>8}\n",
        "task", "features", "model", "acc%", "auc%", "sens%", "spec%"
    );
    for t in tasks {
        let m = &t.mean;
        writeln!(
            out,
            "{:<14} {:<24} {:<14} {:>8} {:>8} {:>8} {:>8}",
            t.task_id,
            t.feature_groups,
            t.variant,
            pct(m.accuracy),
            pct(m.auc),
            pct(m.sensitivity),
            pct(m.specificity)
        )
        .expect("write to string");
    }
    out
}

/// Cell types as rows; accuracy, AUC and seconds per epoch without and with convolution.
pub fn render_ablation_table(report: &AblationReport) -> String {
    let mut out = format!(
        "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "model", "acc%", "auc%", "s/epoch", "acc%+conv", "auc%+conv", "s/epoch"
    );
    for cell in ABLATION_CELLS {
        let mut row = format!("bi{:<6}", cell.name());
        for with_conv in [false, true] {
            match report.cell(cell, with_conv) {
                Some(c) => write!(
                    row,
                    " {:>10} {:>10} {:>10.4}",
                    pct(c.mean.accuracy),
                    pct(c.mean.auc),
                    c.mean_epoch_seconds
                ),
                None => write!(row, " {:>10} {:>10} {:>10}", "-", "-", "-"),
            }
            .expect("write to string");
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Writes the pooled ROC of one task as `fpr,tpr` rows under a comment line
/// carrying the AUC.
pub fn emit_roc(task: &TaskReport, path: &Path) -> Result<(), EvalError> {
    let mut out = format!(
        "# task={} features={} model={} auc={}\nfpr,tpr\n",
        task.task_id, task.feature_groups, task.variant, task.pooled_auc
    );
    for (f, t) in &task.roc_points {
        writeln!(out, "{f},{t}").expect("write to string");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`emit_roc`]: the header AUC and the points.
pub fn read_roc(path: &Path) -> Result<(f64, Vec<(f64, f64)>), EvalError> {
    let text = fs::read_to_string(path)?;
    let bad = |m: &str| EvalError::MalformedRoc(m.to_string());
    let mut lines = text.lines();
    let auc = lines
        .next()
        .and_then(|l| l.split_whitespace().find_map(|kv| kv.strip_prefix("auc=")))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("header without auc"))?;
    if lines.next() != Some("fpr,tpr") {
        return Err(bad("missing column header"));
    }
    let points = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (f, t) = l.split_once(',').ok_or_else(|| bad(l))?;
            Ok((f.parse().map_err(|_| bad(l))?, t.parse().map_err(|_| bad(l))?))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok((auc, points))
}
