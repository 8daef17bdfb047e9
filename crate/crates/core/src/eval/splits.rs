//! Stratified, subject-wise partitions for k-fold and repeated holdout.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::signal_io::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    Kfold { k: usize },
    Holdout { train_frac: f64, val_frac: f64, test_frac: f64, n_runs: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    #[serde(flatten)]
    pub kind: SplitKind,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of each k-fold training set held out, stratified, for early
    /// stopping. `None` trains on the whole fold.
    #[serde(default)]
    pub cv_validation_fraction: Option<f64>,
}

impl SplitPlan {
    pub fn kfold(k: usize, seed: u64) -> Self {
        Self { kind: SplitKind::Kfold { k }, seed, cv_validation_fraction: None }
    }

    pub fn holdout(train_frac: f64, val_frac: f64, test_frac: f64, n_runs: usize, seed: u64) -> Self {
        Self { kind: SplitKind::Holdout { train_frac, val_frac, test_frac, n_runs }, seed, cv_validation_fraction: None }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidPlan(m));
        match self.kind {
            SplitKind::Kfold { k } if k < 2 => return bad(format!("k = {k}, need k >= 2")),
            SplitKind::Holdout { train_frac, val_frac, test_frac, n_runs } => {
                if [train_frac, val_frac, test_frac].iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return bad("holdout fractions must lie in [0, 1]".into());
                }
                if (train_frac + val_frac + test_frac - 1.0).abs() > 1e-9 {
                    return bad(format!("holdout fractions sum to {}", train_frac + val_frac + test_frac));
                }
                if n_runs == 0 {
                    return bad("n_runs must be >= 1".into());
                }
            }
            _ => {}
        }
        if let Some(f) = self.cv_validation_fraction {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("validation fraction {f} outside (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self.kind {
            SplitKind::Kfold { k } => format!("stratified {k}-fold"),
            SplitKind::Holdout { train_frac, val_frac, test_frac, n_runs } => {
                format!("stratified holdout {train_frac}/{val_frac}/{test_frac} x {n_runs} runs")
            }
        }
    }
}

/// Sample indices of one fold or run, each list ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub index: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holdout counts over `n` subjects: train rounds half up, validation rounds
/// down, test takes the remainder.
pub fn holdout_counts(n: usize, train_frac: f64, val_frac: f64) -> (usize, usize, usize) {
    let train = ((train_frac * n as f64 + 0.5 + 1e-9).floor() as usize).min(n);
    let val = ((val_frac * n as f64 + 1e-9).floor() as usize).min(n - train);
    (train, val, n - train - val)
}

struct Subject {
    samples: Vec<usize>,
    label: Label,
}

fn group_subjects(subjects: &[&str], labels: &[Label]) -> Result<Vec<Subject>, EvalError> {
    let mut map: IndexMap<&str, Subject> = IndexMap::new();
    for (i, (&s, &label)) in subjects.iter().zip(labels).enumerate() {
        let entry = map.entry(s).or_insert_with(|| Subject { samples: Vec::new(), label });
        if entry.label != label {
            return Err(EvalError::MixedSubjectLabels(s.to_string()));
        }
        entry.samples.push(i);
    }
    Ok(map.into_values().collect())
}

/// Generator for one fold or run: the plan seed, stream chosen by index.
fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Partitions samples keeping every subject's samples on one side, stratified
/// by label.
pub fn make_splits(subjects: &[&str], labels: &[Label], plan: &SplitPlan) -> Result<Vec<Split>, EvalError> {
    plan.validate()?;
    if subjects.len() != labels.len() {
        return Err(EvalError::InvalidPlan("subjects and labels differ in length".into()));
    }
    let groups = group_subjects(subjects, labels)?;
    let by_class = |l: Label| -> Vec<usize> { (0..groups.len()).filter(|&g| groups[g].label == l).collect() };
    let (pos, neg) = (by_class(Label::Pd), by_class(Label::Hc));
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::SingleClass);
    }
    let expand = |gs: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = gs.iter().flat_map(|&g| groups[g].samples.iter().copied()).collect();
        v.sort_unstable();
        v
    };

    let mut rng = indexed_rng(plan.seed, 0);
    let mut splits = Vec::new();
    match plan.kind {
        SplitKind::Kfold { k } => {
            let smaller = pos.len().min(neg.len());
            if smaller < k {
                return Err(EvalError::TooSmall { n: smaller, need: k });
            }
            let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
            // dealing continues across classes so fold sizes differ by at most one
            let mut next = 0;
            for class in [pos, neg] {
                let mut class = class;
                class.shuffle(&mut rng);
                for g in class {
                    folds[next % k].push(g);
                    next += 1;
                }
            }
            for (i, fold) in folds.iter().enumerate() {
                let rest: Vec<usize> = folds.iter().enumerate().filter(|&(j, _)| j != i).flat_map(|(_, f)| f.clone()).collect();
                let (train, val) = match plan.cv_validation_fraction {
                    Some(frac) => carve_validation(&rest, &groups, frac, &mut indexed_rng(plan.seed, 1 + i as u64)),
                    None => (rest, Vec::new()),
                };
                splits.push(Split { index: i, train: expand(&train), val: expand(&val), test: expand(fold) });
            }
        }
        SplitKind::Holdout { train_frac, val_frac, n_runs, .. } => {
            let (n_train, n_val, n_test) = holdout_counts(groups.len(), train_frac, val_frac);
            if n_train == 0 || n_test == 0 {
                return Err(EvalError::TooSmall { n: groups.len(), need: 2 });
            }
            for run in 0..n_runs {
                let mut rng = indexed_rng(plan.seed, 1 + run as u64);
                let order = stratified_order(&pos, &neg, &mut rng);
                splits.push(Split {
                    index: run,
                    train: expand(&order[..n_train]),
                    val: expand(&order[n_train..n_train + n_val]),
                    test: expand(&order[n_train + n_val..]),
                });
            }
        }
    }
    Ok(splits)
}

/// Interleaves shuffled classes so that every prefix holds each class in
/// proportion, within one subject.
fn stratified_order(pos: &[usize], neg: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut keyed: Vec<(u128, u8, usize)> = Vec::with_capacity(pos.len() + neg.len());
    for (tag, class) in [(0u8, pos), (1u8, neg)] {
        let mut class = class.to_vec();
        class.shuffle(rng);
        // rank position (r + 1/2) / n_class, cross-multiplied to stay in integers
        let other = if tag == 0 { neg.len() } else { pos.len() } as u128;
        for (r, g) in class.into_iter().enumerate() {
            keyed.push(((2 * r as u128 + 1) * other, tag, g));
        }
    }
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, g)| g).collect()
}

fn carve_validation(train: &[usize], groups: &[Subject], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut keep, mut val) = (Vec::new(), Vec::new());
    for label in [Label::Pd, Label::Hc] {
        let mut class: Vec<usize> = train.iter().copied().filter(|&g| groups[g].label == label).collect();
        class.shuffle(rng);
        let take = ((frac * class.len() as f64 + 0.5).floor() as usize).max(1).min(class.len().saturating_sub(1));
        val.extend_from_slice(&class[..take]);
        keep.extend_from_slice(&class[take..]);
    }
    (keep, val)
}
