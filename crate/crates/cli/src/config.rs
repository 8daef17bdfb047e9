//! TOML experiment configuration. Every field except `seed` and `dataset` has a
//! default equal to the published setup.

use std::fs;
use std::path::{Path, PathBuf};

use hwpd::eval::{ExperimentOptions, ExperimentSetup, SplitPlan};
use hwpd::features::{FeatureGroupSelection, FeatureOptions};
use hwpd::nn::{Architecture, TrainConfig};
use hwpd::signal_io::{
    generate_synthetic, load_dataset, read_manifest, ColumnMap, DatasetFormat, SignalSequence, SyntheticParams,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

const SYNTHETIC_QUICK: &str = include_str!("../presets/synthetic-quick.toml");

/// Names of the configurations compiled into the binary.
pub const PRESETS: [&str; 1] = ["synthetic-quick"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds data generation, splits, initialization, shuffling and dropout.
    pub seed: Option<u64>,
    /// Output directory; not part of the echoed configuration.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default = "Architecture::standard")]
    pub model: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_split")]
    pub split: SplitPlan,
    #[serde(default)]
    pub options: ExperimentOptions,
}

fn default_split() -> SplitPlan {
    SplitPlan::kfold(10, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        n_subjects_per_class: usize,
        min_length: usize,
        max_length: usize,
        class_separation: f64,
        #[serde(default = "default_task")]
        task_id: String,
    },
    Manifest {
        manifest: PathBuf,
        format: DatasetFormat,
        #[serde(default)]
        column_map: Option<ColumnMap>,
    },
}

fn default_task() -> String {
    "spiral".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub groups: FeatureGroupSelection,
    pub tick_seconds: f64,
    pub include_raw_pressure_in_derived: bool,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let opts = FeatureOptions::default();
        Self {
            groups: "derived".parse().expect("valid group"),
            tick_seconds: opts.tick_seconds,
            include_raw_pressure_in_derived: opts.include_raw_pressure_in_derived,
        }
    }
}

impl FeaturesConfig {
    pub fn options(&self) -> FeatureOptions {
        FeatureOptions {
            tick_seconds: self.tick_seconds,
            include_raw_pressure_in_derived: self.include_raw_pressure_in_derived,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; a relative manifest path resolves against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let (DatasetConfig::Manifest { manifest, .. }, Some(base)) = (&mut cfg.dataset, base_dir) {
            if manifest.is_relative() {
                *manifest = base.join(&*manifest);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "synthetic-quick" => Self::from_toml(SYNTHETIC_QUICK, None),
            other => Err(CliError::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")))),
        }
    }

    /// Applies command-line overrides, propagates the seed and checks that the
    /// configuration is usable.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        if seed.is_some() {
            self.seed = seed;
        }
        if out.is_some() {
            self.out = out;
        }
        let seed = self.seed.ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))?;
        self.train.seed = seed;
        self.split.seed = seed;
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate()?;
        if let DatasetConfig::Manifest { manifest, .. } = &self.dataset {
            if !manifest.exists() {
                return Err(CliError::Config(format!("manifest {} does not exist", manifest.display())));
            }
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Config("an output directory is required (--out)".into()))
    }

    pub fn setup(&self) -> ExperimentSetup {
        ExperimentSetup {
            selection: self.features.groups.clone(),
            features: self.features.options(),
            architecture: self.model.clone(),
            train: self.train.clone(),
            plan: self.split.clone(),
            options: self.options.clone(),
        }
    }

    /// The resolved configuration as embedded in reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// File format and column order of the sequences, as needed to parse new input.
    pub fn input_format(&self) -> (DatasetFormat, ColumnMap) {
        match &self.dataset {
            DatasetConfig::Synthetic { .. } => (DatasetFormat::Synthetic, ColumnMap::default()),
            DatasetConfig::Manifest { format, column_map, .. } => (*format, column_map.clone().unwrap_or_default()),
        }
    }

    pub fn load_sequences(&self) -> Result<Vec<SignalSequence>, CliError> {
        match &self.dataset {
            DatasetConfig::Synthetic { n_subjects_per_class, min_length, max_length, class_separation, task_id } => {
                let params = SyntheticParams {
                    task_id: task_id.clone(),
                    ..SyntheticParams::new(
                        *n_subjects_per_class,
                        (*min_length, *max_length),
                        *class_separation,
                        self.seed(),
                    )
                };
                generate_synthetic(&params).map_err(|e| CliError::Config(e.to_string()))
            }
            DatasetConfig::Manifest { manifest, format, column_map } => {
                let mut m = read_manifest(manifest, *format)?;
                if let Some(map) = column_map {
                    m.column_map = map.clone();
                }
                Ok(load_dataset(&m)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_published_defaults() {
        let cfg = ExperimentConfig::preset("synthetic-quick").unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg.model, Architecture::standard());
        assert_eq!(cfg.train.learning_rate, 0.001);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.split, SplitPlan::kfold(10, 0));
        assert_eq!(cfg.features.groups.label(), "derived");
        assert!(matches!(cfg.dataset, DatasetConfig::Synthetic { n_subjects_per_class: 20, .. }));
    }

    #[test]
    fn seed_required_and_propagated() {
        let text = "[dataset]\nsource = \"synthetic\"\nn_subjects_per_class = 2\nmin_length = 20\nmax_length = 30\nclass_separation = 1.0\n";
        let cfg = ExperimentConfig::from_toml(text, None).unwrap();
        assert!(matches!(cfg.clone().resolve(None, None), Err(CliError::Config(_))));
        let cfg = cfg.resolve(Some(9), None).unwrap();
        assert_eq!((cfg.train.seed, cfg.split.seed), (9, 9));
    }

    #[test]
    fn rejects_unknown_fields_and_missing_manifest() {
        assert!(ExperimentConfig::from_toml("seed = 1\nbogus = 2\n[dataset]\nsource = \"synthetic\"", None).is_err());
        let text = "seed = 1\n[dataset]\nsource = \"manifest\"\nmanifest = \"nope.csv\"\nformat = \"tablet_svc\"\n";
        let cfg = ExperimentConfig::from_toml(text, Some(Path::new("/nonexistent"))).unwrap();
        match cfg.resolve(None, None) {
            Err(CliError::Config(m)) => assert!(m.contains("/nonexistent/nope.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn holdout_section_parses() {
        let text = "seed = 3\n[dataset]\nsource = \"synthetic\"\nn_subjects_per_class = 2\nmin_length = 20\nmax_length = 30\nclass_separation = 1.0\n[split]\nkind = \"holdout\"\ntrain_frac = 0.65\nval_frac = 0.10\ntest_frac = 0.25\nn_runs = 20\n[options]\nclip_percentiles = [5.0, 90.0]\n";
        let cfg = ExperimentConfig::from_toml(text, None).unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg.split, SplitPlan::holdout(0.65, 0.10, 0.25, 20, 3));
        assert_eq!(cfg.options.clip_percentiles, (5.0, 90.0));
    }
}
