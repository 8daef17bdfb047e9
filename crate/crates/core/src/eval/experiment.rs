use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_auc, roc_curve, MetricSet};
use super::splits::{make_splits, Split, SplitPlan};
use super::EvalError;
use crate::features::{assemble_features, FeatureGroupSelection, FeatureMatrix, FeatureOptions};
use crate::nn::{Architecture, CellKind, Model, ModelSpec, Sample, Tensor, TrainConfig, TrainHistory, Trainer};
use crate::preprocess::{compute_cutoff, fit_length, fit_normalization, CutoffScope, NormalizationStats, Preprocessor};
use crate::signal_io::{Label, SignalSequence};

/// Preprocessing toggles with more than one defensible setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    pub cutoff_scope: CutoffScope,
    pub normalize: bool,
    /// Percentile clip bounds fitted before z-scoring; `(0, 100)` disables clipping.
    pub clip_percentiles: (f64, f64),
    /// Permutes training labels. A leakage control: accuracy should fall to chance.
    pub label_shuffle: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { cutoff_scope: CutoffScope::TrainOnly, normalize: true, clip_percentiles: (0.0, 100.0), label_shuffle: false }
    }
}

/// Everything needed to rerun an experiment on the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub selection: FeatureGroupSelection,
    #[serde(default)]
    pub features: FeatureOptions,
    pub architecture: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    pub plan: SplitPlan,
    #[serde(default)]
    pub options: ExperimentOptions,
}

impl ExperimentSetup {
    /// Defaults: derived features, conv + BiGRU, stratified 10-fold.
    pub fn standard(seed: u64) -> Self {
        Self {
            selection: "derived".parse().expect("valid group"),
            features: FeatureOptions::default(),
            architecture: Architecture::standard(),
            train: TrainConfig { seed, ..Default::default() },
            plan: SplitPlan::kfold(10, seed),
            options: ExperimentOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub task_id: String,
    pub label: Label,
    pub role: Role,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub index: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub cutoff: usize,
    pub metrics: MetricSet,
    pub history: TrainHistory,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MeanMetrics {
    pub fn of<'a>(sets: impl IntoIterator<Item = &'a MetricSet>) -> Self {
        let mut m = Self::default();
        let mut n = 0.0;
        for s in sets {
            m.accuracy += s.accuracy;
            m.auc += s.auc;
            m.sensitivity += s.sensitivity;
            m.specificity += s.specificity;
            n += 1.0;
        }
        Self { accuracy: m.accuracy / n, auc: m.auc / n, sensitivity: m.sensitivity / n, specificity: m.specificity / n }
    }

    fn mean_of(items: &[MeanMetrics]) -> Self {
        let n = items.len() as f64;
        let sum = |f: fn(&MeanMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            accuracy: sum(|m| m.accuracy),
            auc: sum(|m| m.auc),
            sensitivity: sum(|m| m.sensitivity),
            specificity: sum(|m| m.specificity),
        }
    }
}

/// Results for one task under one feature selection and model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub feature_groups: String,
    pub variant: String,
    pub protocol: String,
    pub n_samples: usize,
    pub n_features: usize,
    /// Arithmetic means of the per-fold metrics.
    pub mean: MeanMetrics,
    /// AUC of `roc_points`, the curve over all pooled test predictions.
    pub pooled_auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub folds: Vec<FoldReport>,
    /// Every sample of the last split scored by that split's model.
    pub final_split_predictions: Vec<Prediction>,
    pub mean_epoch_seconds: f64,
}

/// The last split's model with the preprocessing it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub task_id: String,
    pub model: Model,
    pub preprocessor: Preprocessor,
}

impl FittedModel {
    pub fn score(&self, fm: &FeatureMatrix) -> Result<f64, EvalError> {
        Ok(self.model.predict(&Tensor::from(&self.preprocessor.apply(fm)?))?)
    }
}

/// splitmix64 of `base` combined with `index`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Assembles features for every sequence, attaching the sample to any error.
pub fn featurize(
    seqs: &[SignalSequence],
    selection: &FeatureGroupSelection,
    opts: &FeatureOptions,
) -> Result<Vec<FeatureMatrix>, EvalError> {
    seqs.par_iter()
        .map(|s| {
            assemble_features(s, selection, opts).map_err(|e| EvalError::Sample {
                subject_id: s.subject_id.clone(),
                task_id: s.task_id.clone(),
                source: Box::new(e.into()),
            })
        })
        .collect()
}

/// Runs the split plan separately for each task, in order of first appearance.
pub fn run_experiment(
    dataset: &[SignalSequence],
    setup: &ExperimentSetup,
) -> Result<Vec<(TaskReport, FittedModel)>, EvalError> {
    let fms = featurize(dataset, &setup.selection, &setup.features)?;
    run_on_features(&fms, setup)
}

/// As [`run_experiment`] on already assembled features.
pub fn run_on_features(
    fms: &[FeatureMatrix],
    setup: &ExperimentSetup,
) -> Result<Vec<(TaskReport, FittedModel)>, EvalError> {
    setup.plan.validate()?;
    let mut tasks: IndexMap<&str, Vec<FeatureMatrix>> = IndexMap::new();
    for fm in fms {
        tasks.entry(fm.task_id.as_str()).or_default().push(fm.clone());
    }
    tasks.into_values().map(|task| run_task(&task, setup)).collect()
}

/// Cross-validates or repeatedly holds out one task's samples.
pub fn run_task(dataset: &[FeatureMatrix], setup: &ExperimentSetup) -> Result<(TaskReport, FittedModel), EvalError> {
    let first = dataset.first().ok_or(EvalError::EmptyDataset)?;
    let subjects: Vec<&str> = dataset.iter().map(|f| f.subject_id.as_str()).collect();
    let labels: Vec<Label> = dataset.iter().map(|f| f.label).collect();
    let splits = make_splits(&subjects, &labels, &setup.plan)?;
    let spec = setup.architecture.resolve(first.cols());
    spec.validate()?;
    let last = splits.len() - 1;

    let results: Vec<SplitOutcome> = splits
        .par_iter()
        .map(|split| {
            run_split(dataset, split, &spec, setup, split.index == last)
                .map_err(|e| EvalError::Fold { fold: split.index, source: Box::new(e) })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let mut folds = Vec::with_capacity(results.len());
    let mut fitted = None;
    for (fold, extra) in results {
        folds.push(fold);
        if extra.is_some() {
            fitted = extra;
        }
    }
    let (fitted, final_split_predictions) = fitted.expect("last split returns its model");

    let pooled: Vec<(f64, bool)> =
        folds.iter().flat_map(|f| f.predictions.iter().map(|p| (p.probability, p.label.is_positive()))).collect();
    let epoch_times: Vec<f64> = folds.iter().flat_map(|f| f.history.epoch_seconds.iter().copied()).collect();
    let report = TaskReport {
        task_id: first.task_id.clone(),
        feature_groups: setup.selection.label(),
        variant: setup.architecture.label(),
        protocol: setup.plan.describe(),
        n_samples: dataset.len(),
        n_features: first.cols(),
        mean: MeanMetrics::of(folds.iter().map(|f| &f.metrics)),
        pooled_auc: compute_auc(&pooled)?,
        roc_points: roc_curve(&pooled)?,
        folds,
        final_split_predictions,
        mean_epoch_seconds: epoch_times.iter().sum::<f64>() / epoch_times.len().max(1) as f64,
    };
    Ok((report, fitted))
}

type SplitOutcome = (FoldReport, Option<(FittedModel, Vec<Prediction>)>);

fn run_split(
    dataset: &[FeatureMatrix],
    split: &Split,
    spec: &ModelSpec,
    setup: &ExperimentSetup,
    keep_model: bool,
) -> Result<SplitOutcome, EvalError> {
    let pick = |idx: &[usize]| -> Vec<FeatureMatrix> { idx.iter().map(|&i| dataset[i].clone()).collect() };
    let train_fm = pick(&split.train);
    let opts = &setup.options;
    let cutoff = match opts.cutoff_scope {
        CutoffScope::TrainOnly => compute_cutoff(&train_fm)?,
        CutoffScope::AllSequences => compute_cutoff(dataset)?,
    };
    let stats = if opts.normalize {
        let fitted: Vec<FeatureMatrix> = train_fm.iter().map(|f| fit_length(f, cutoff)).collect();
        fit_normalization(&fitted, opts.clip_percentiles.0, opts.clip_percentiles.1)?
    } else {
        NormalizationStats::identity(&dataset[0].column_names)
    };
    let preprocessor = Preprocessor { cutoff, stats };
    let samples = |idx: &[usize]| -> Result<Vec<Sample>, EvalError> {
        idx.iter()
            .map(|&i| {
                let fm = &dataset[i];
                Ok(Sample {
                    id: fm.subject_id.clone(),
                    input: Tensor::from(&preprocessor.apply(fm)?),
                    target: fm.label.target(),
                })
            })
            .collect()
    };
    let mut train = samples(&split.train)?;
    let mut val = samples(&split.val)?;
    let test = samples(&split.test)?;
    let seed = derive_seed(setup.train.seed, split.index as u64);
    if opts.label_shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        balanced_shuffle(&mut train, &mut rng);
        balanced_shuffle(&mut val, &mut rng);
    }

    let model = Model::new(spec.clone(), seed)?;
    let mut trainer = Trainer::new(model, TrainConfig { seed, ..setup.train.clone() })?;
    let history = trainer.fit(&train, if val.is_empty() { None } else { Some(&val) })?;
    let model = trainer.model;

    let predict = |idx: &[usize], set: &[Sample], role: Role| -> Result<Vec<Prediction>, EvalError> {
        idx.iter()
            .zip(set)
            .map(|(&i, s)| {
                let fm = &dataset[i];
                Ok(Prediction {
                    subject_id: fm.subject_id.clone(),
                    task_id: fm.task_id.clone(),
                    label: fm.label,
                    role,
                    probability: model.predict(&s.input)?,
                })
            })
            .collect()
    };
    let predictions = predict(&split.test, &test, Role::Test)?;
    let scores: Vec<(f64, bool)> = predictions.iter().map(|p| (p.probability, p.label.is_positive())).collect();
    let fold = FoldReport {
        index: split.index,
        train_size: split.train.len(),
        val_size: split.val.len(),
        test_size: split.test.len(),
        cutoff: cutoff.cutoff,
        metrics: MetricSet::from_scores(&scores)?,
        history,
        predictions: predictions.clone(),
    };
    if !keep_model {
        return Ok((fold, None));
    }
    // unshuffled targets: the log records true labels
    let mut all = predict(&split.train, &samples(&split.train)?, Role::Train)?;
    all.extend(predict(&split.val, &samples(&split.val)?, Role::Val)?);
    all.extend(predictions);
    let fitted = FittedModel { task_id: dataset[0].task_id.clone(), model, preprocessor };
    Ok((fold, Some((fitted, all))))
}

/// Reassigns targets so that each true class is split evenly between the two
/// new labels: the new labels are random but carry no information about the
/// true ones.
fn balanced_shuffle(set: &mut [Sample], rng: &mut ChaCha8Rng) {
    let truth: Vec<f64> = set.iter().map(|s| s.target).collect();
    let mut odd_goes_positive = rng.random_bool(0.5);
    for class in [1.0, 0.0] {
        let mut members: Vec<usize> = (0..set.len()).filter(|&i| truth[i] == class).collect();
        members.shuffle(rng);
        let half = if members.len() % 2 == 1 && odd_goes_positive { members.len() / 2 + 1 } else { members.len() / 2 };
        if members.len() % 2 == 1 {
            odd_goes_positive = !odd_goes_positive;
        }
        for (r, &i) in members.iter().enumerate() {
            set[i].target = if r < half { 1.0 } else { 0.0 };
        }
    }
}

/// One cell of the cell-type by convolution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub cell: CellKind,
    pub with_conv: bool,
    pub variant: String,
    /// Mean over tasks of the per-task fold means.
    pub mean: MeanMetrics,
    pub mean_epoch_seconds: f64,
    pub tasks: Vec<TaskReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, cell: CellKind, with_conv: bool) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.cell == cell && c.with_conv == with_conv)
    }
}

pub const ABLATION_CELLS: [CellKind; 3] = [CellKind::Rnn, CellKind::Lstm, CellKind::Gru];

/// Every recurrent cell type with and without the conv stack, other settings
/// taken from `setup`.
pub fn run_ablation_grid(dataset: &[SignalSequence], setup: &ExperimentSetup) -> Result<AblationReport, EvalError> {
    let fms = featurize(dataset, &setup.selection, &setup.features)?;
    let mut cells = Vec::with_capacity(6);
    for cell in ABLATION_CELLS {
        for with_conv in [false, true] {
            let variant_setup = ExperimentSetup { architecture: Architecture::variant(cell, with_conv), ..setup.clone() };
            let tasks: Vec<TaskReport> = run_on_features(&fms, &variant_setup)?.into_iter().map(|(r, _)| r).collect();
            let means: Vec<MeanMetrics> = tasks.iter().map(|t| t.mean).collect();
            cells.push(AblationCell {
                cell,
                with_conv,
                variant: variant_setup.architecture.label(),
                mean: MeanMetrics::mean_of(&means),
                mean_epoch_seconds: tasks.iter().map(|t| t.mean_epoch_seconds).sum::<f64>() / tasks.len() as f64,
                tasks,
            });
        }
    }
    let report = AblationReport { cells };
    for cell in ABLATION_CELLS {
        let (Some(without), Some(with)) = (report.cell(cell, false), report.cell(cell, true)) else {
            return Err(EvalError::IncompleteGrid(cell.name().to_string()));
        };
        if with.mean.accuracy < without.mean.accuracy - 0.05 {
            log::warn!(
                "{}: with-conv accuracy {:.4} trails without-conv {:.4} by more than 0.05",
                cell.name(),
                with.mean.accuracy,
                without.mean.accuracy
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{generate_synthetic, SyntheticParams};

    fn quick_setup(epochs: usize) -> ExperimentSetup {
        let mut s = ExperimentSetup::standard(5);
        s.train.epochs = epochs;
        s.plan = SplitPlan::kfold(2, 5);
        s
    }

    fn data() -> Vec<SignalSequence> {
        generate_synthetic(&SyntheticParams::new(4, (60, 90), 1.0, 8)).unwrap()
    }

    #[test]
    fn folds_cover_and_report_is_consistent() {
        let (report, fitted) = run_experiment(&data(), &quick_setup(2)).unwrap().remove(0);
        assert_eq!(report.folds.len(), 2);
        assert_eq!(report.folds.iter().map(|f| f.test_size).sum::<usize>(), 8);
        assert_eq!(report.n_features, 17);
        let mean_acc = report.folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / 2.0;
        assert_eq!(report.mean.accuracy, mean_acc);
        assert_eq!(report.final_split_predictions.len(), 8);
        assert_eq!(report.variant, "bigru+conv");
        // the returned model replays the logged probabilities exactly
        let fms = featurize(&data(), &quick_setup(2).selection, &FeatureOptions::default()).unwrap();
        for p in &report.final_split_predictions {
            let fm = fms.iter().find(|f| f.subject_id == p.subject_id).unwrap();
            assert_eq!(fitted.score(fm).unwrap(), p.probability);
        }
    }

    #[test]
    fn deterministic_reports() {
        let a = run_experiment(&data(), &quick_setup(1)).unwrap();
        let b = run_experiment(&data(), &quick_setup(1)).unwrap();
        let strip = |r: &TaskReport| {
            let mut r = r.clone();
            r.mean_epoch_seconds = 0.0;
            r.folds.iter_mut().for_each(|f| f.history.epoch_seconds.clear());
            r
        };
        assert_eq!(strip(&a[0].0), strip(&b[0].0));
        assert_eq!(a[0].1, b[0].1);
    }

    #[test]
    fn zero_learning_rate_stays_near_half() {
        let mut setup = quick_setup(1);
        setup.train.learning_rate = 0.0;
        let (report, _) = run_experiment(&data(), &setup).unwrap().remove(0);
        for f in &report.folds {
            assert!(f.predictions.iter().all(|p| (p.probability - 0.5).abs() < 0.2));
        }
    }

    #[test]
    fn fold_errors_carry_index() {
        let mut setup = quick_setup(1);
        setup.architecture.conv[0].kernel = 500;
        setup.architecture.conv[0].stride = 500;
        match run_experiment(&data(), &setup) {
            Err(EvalError::Fold { fold, .. }) => assert_eq!(fold, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn balanced_shuffle_is_uninformative() {
        let mut set: Vec<Sample> = (0..13)
            .map(|i| Sample { id: i.to_string(), input: Tensor::zeros(vec![1, 1]), target: f64::from(u8::from(i < 7)) })
            .collect();
        let truth: Vec<f64> = set.iter().map(|s| s.target).collect();
        balanced_shuffle(&mut set, &mut ChaCha8Rng::seed_from_u64(1));
        for class in [0.0, 1.0] {
            let relabelled: Vec<f64> =
                set.iter().zip(&truth).filter(|(_, &t)| t == class).map(|(s, _)| s.target).collect();
            let pos = relabelled.iter().filter(|&&t| t == 1.0).count() as i64;
            assert!((2 * pos - relabelled.len() as i64).abs() <= 1);
        }
        let total: f64 = set.iter().map(|s| s.target).sum();
        assert!((total - 6.5).abs() <= 0.5);
    }

    #[test]
    fn derive_seed_spreads() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(3, 4), derive_seed(3, 4));
    }
}
