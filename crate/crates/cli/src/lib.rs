//! Reproducible experiment runs driven by a TOML config: feature dumps,
//! training with cross-validation or holdout, the cell-type ablation grid,
//! scoring single recordings and writing synthetic datasets.

pub mod commands;
pub mod config;
mod error;

pub use config::{DatasetConfig, ExperimentConfig, FeaturesConfig, PRESETS};
pub use error::CliError;
