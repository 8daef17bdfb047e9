use hwpd::eval::EvalError;
use hwpd::features::FeatureError;
use hwpd::nn::NnError;
use hwpd::preprocess::PreprocessError;
use hwpd::signal_io::SignalError;
use thiserror::Error;

/// Failure of a subcommand, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Training(_) => 3,
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::InvalidSpec(_) => CliError::Config(e.to_string()),
            NnError::SpecMismatch { .. } | NnError::MalformedCheckpoint(_) | NnError::Io(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let msg = e.to_string();
        match e.root() {
            EvalError::InvalidPlan(_) | EvalError::Nn(NnError::InvalidSpec(_)) => CliError::Config(msg),
            EvalError::Nn(_) => CliError::Training(msg),
            _ => CliError::Data(msg),
        }
    }
}
