//! Hand-written layers with explicit backward passes: strided 1D convolution,
//! RNN/LSTM/GRU cells (optionally bidirectional) and a sigmoid head, trained
//! with binary cross-entropy and Adam.

mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod init;
mod loss;
mod model;
mod recurrent;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use conv::{conv1d_forward, Activation, Conv1d, Conv1dSpec};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use init::{glorot_uniform, orthogonal};
pub use loss::{bce_grad, bce_logit_grad, bce_loss, PROB_EPS};
pub use model::{Architecture, ConvLayerConfig, ForwardTrace, Model, ModelSpec};
pub use recurrent::{
    bidirectional_forward, gru_cell_step, lstm_cell_step, rnn_cell_step, CellKind, CellParams, RecurrentLayer,
    RecurrentSpec, RecurrentTrace,
};
pub use tensor::Tensor;
pub use train::{backward_and_adam_step, mean_loss, Sample, TrainConfig, TrainHistory, Trainer};

use thiserror::Error;

/// Generator used for initialization, shuffling and dropout.
pub type NnRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input has {len} steps, the network needs at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient in block {block} (batch: {})", batch_ids.join(", "))]
    NonFiniteGradient { block: String, batch_ids: Vec<String> },
    #[error("spec mismatch: expected {expected}, found {found}")]
    SpecMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for NnError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A named, shaped slab of trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { name: name.into(), shape, values }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }
}
