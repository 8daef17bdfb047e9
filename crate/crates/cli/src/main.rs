use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hwpd::features::FeatureGroupSelection;
use hwpd::signal_io::SyntheticParams;
use hwpd_cli::commands::{cmd_ablate, cmd_features, cmd_score, cmd_synth, cmd_train};
use hwpd_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hwpd", version, about = "Parkinson's disease detection from online handwriting")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, env = "HWPD_CONFIG", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled config instead of --config, e.g. synthetic-quick.
    #[arg(long, global = true, env = "HWPD_PRESET")]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "HWPD_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "HWPD_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature CSV per recording.
    Features {
        /// Overrides the configured feature groups, e.g. `kinematic,pressure`.
        #[arg(long)]
        groups: Option<String>,
    },
    /// Evaluate the configured model and save per-task checkpoints.
    Train,
    /// Run every recurrent cell type with and without convolution.
    Ablate,
    /// Print P(PD) for one recording.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
    },
    /// Write a synthetic dataset with a manifest.
    Synth {
        #[arg(long, default_value_t = 20)]
        n_per_class: usize,
        #[arg(long, default_value_t = 200)]
        min_length: usize,
        #[arg(long, default_value_t = 400)]
        max_length: usize,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value = "spiral")]
        task: String,
    },
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(CliError::Config("pass --config <file> or --preset <name>".into())),
    };
    cfg.resolve(cli.seed, cli.out.clone())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Features { groups } => {
            let mut cfg = experiment_config(&cli)?;
            if let Some(g) = groups {
                cfg.features.groups =
                    g.parse::<FeatureGroupSelection>().map_err(|e| CliError::Config(e.to_string()))?;
            }
            println!("{}", cmd_features(&cfg)?.line());
        }
        Command::Train => {
            let report = cmd_train(&experiment_config(&cli)?)?;
            print!("{}", report.render_table());
        }
        Command::Ablate => {
            let report = cmd_ablate(&experiment_config(&cli)?)?;
            print!("{}", report.render_table());
        }
        Command::Score { checkpoint, input } => println!("{}", cmd_score(checkpoint, input)?.line()),
        Command::Synth { n_per_class, min_length, max_length, separation, task } => {
            let seed = cli.seed.ok_or_else(|| CliError::Config("--seed is required".into()))?;
            let out = cli.out.as_deref().ok_or_else(|| CliError::Config("--out is required".into()))?;
            let params = SyntheticParams {
                task_id: task.clone(),
                ..SyntheticParams::new(*n_per_class, (*min_length, *max_length), *separation, seed)
            };
            println!("wrote {}", cmd_synth(&params, out)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("HWPD_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
