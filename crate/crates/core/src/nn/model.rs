use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conv::{Activation, Conv1d, Conv1dSpec};
use super::init::glorot_uniform;
use super::recurrent::{CellKind, RecurrentLayer, RecurrentSpec, RecurrentTrace};
use super::{sigmoid, NnError, NnRng, ParamBlock, Tensor};

/// Fully resolved network: conv stack, recurrent stack, dense sigmoid head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_features: usize,
    pub conv_layers: Vec<Conv1dSpec>,
    pub recurrent_layers: Vec<RecurrentSpec>,
}

impl ModelSpec {
    /// Two strided convolutions (8 filters k5 s5, 16 filters k3 s3, ReLU) and two
    /// 32-unit BiGRU layers with dropout 0.1 between them.
    pub fn standard(input_features: usize) -> Self {
        Architecture::standard().resolve(input_features)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_features == 0 {
            return Err(NnError::InvalidSpec("input_features must be >= 1".into()));
        }
        let mut width = self.input_features;
        for (i, c) in self.conv_layers.iter().enumerate() {
            c.validate()?;
            if c.in_channels != width {
                return Err(NnError::InvalidSpec(format!(
                    "conv layer {i} expects {} channels, previous layer gives {width}",
                    c.in_channels
                )));
            }
            width = c.out_channels;
        }
        for r in &self.recurrent_layers {
            r.validate()?;
        }
        Ok(())
    }

    /// Width of the features entering the first recurrent layer.
    pub fn conv_output_width(&self) -> usize {
        self.conv_layers.last().map_or(self.input_features, |c| c.out_channels)
    }

    pub fn head_input_width(&self) -> usize {
        self.recurrent_layers.last().map_or(self.conv_output_width(), |r| r.output_width())
    }

    /// Shortest input that leaves at least one step after the conv stack.
    pub fn min_input_len(&self) -> usize {
        self.conv_layers.iter().rev().fold(1, |need, c| c.kernel + (need - 1) * c.stride)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let conv: usize = self.conv_layers.iter().map(Conv1dSpec::param_count).sum();
        let mut width = self.conv_output_width();
        let mut rec = 0;
        for r in &self.recurrent_layers {
            rec += r.param_count(width);
            width = r.output_width();
        }
        conv + rec + self.head_input_width() + 1
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// A conv layer without its input width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerConfig {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

/// Model layout independent of the feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv: Vec<ConvLayerConfig>,
    pub recurrent: Vec<RecurrentSpec>,
}

impl Architecture {
    pub fn standard() -> Self {
        Self::variant(CellKind::Gru, true)
    }

    /// The standard layout with another cell type, with or without the conv stack.
    pub fn variant(cell: CellKind, with_conv: bool) -> Self {
        let conv = if with_conv {
            vec![
                ConvLayerConfig { filters: 8, kernel: 5, stride: 5, activation: Activation::Relu },
                ConvLayerConfig { filters: 16, kernel: 3, stride: 3, activation: Activation::Relu },
            ]
        } else {
            Vec::new()
        };
        let first = RecurrentSpec::new(cell, 32, true);
        let second = RecurrentSpec { dropout_rate: 0.1, recurrent_dropout_rate: 0.1, ..first };
        Self { conv, recurrent: vec![first, second] }
    }

    /// Short name such as `bigru+conv`.
    pub fn label(&self) -> String {
        let mut rec: Vec<String> = self
            .recurrent
            .iter()
            .map(|r| format!("{}{}", if r.bidirectional { "bi" } else { "" }, r.cell.name()))
            .collect();
        rec.dedup();
        let body = if rec.is_empty() { "dense".to_string() } else { rec.join("-") };
        if self.conv.is_empty() {
            body
        } else {
            format!("{body}+conv")
        }
    }

    pub fn resolve(&self, input_features: usize) -> ModelSpec {
        let mut width = input_features;
        let conv_layers = self
            .conv
            .iter()
            .map(|c| {
                let spec = Conv1dSpec {
                    in_channels: width,
                    out_channels: c.filters,
                    kernel: c.kernel,
                    stride: c.stride,
                    activation: c.activation,
                };
                width = c.filters;
                spec
            })
            .collect();
        ModelSpec { input_features, conv_layers, recurrent_layers: self.recurrent.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    pub convs: Vec<Conv1d>,
    pub recurrents: Vec<RecurrentLayer>,
    pub head_weight: ParamBlock,
    pub head_bias: ParamBlock,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[i + 1]` the output of conv `i`.
    activations: Vec<Tensor>,
    recurrent: Vec<RecurrentTrace>,
    head_input: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

impl Model {
    /// Random initialization: Glorot-uniform input kernels, orthogonal recurrent
    /// matrices, zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = NnRng::seed_from_u64(seed);
        let convs = spec.conv_layers.iter().enumerate().map(|(i, &c)| Conv1d::new(c, i, &mut rng)).collect();
        let mut width = spec.conv_output_width();
        let mut recurrents = Vec::with_capacity(spec.recurrent_layers.len());
        for (i, &r) in spec.recurrent_layers.iter().enumerate() {
            recurrents.push(RecurrentLayer::new(r, width, i, &mut rng));
            width = r.output_width();
        }
        let head_weight = ParamBlock::new("head.weight", vec![1, width], glorot_uniform(&mut rng, width, width, 1));
        Ok(Self { spec, convs, recurrents, head_weight, head_bias: ParamBlock::zeros("head.bias", vec![1]) })
    }

    /// Same layout with every parameter zero.
    pub fn zeroed(spec: ModelSpec) -> Result<Self, NnError> {
        let mut m = Self::new(spec, 0)?;
        for b in m.blocks_mut() {
            b.values.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Parameter blocks in checkpoint order: conv layers (weight, bias), recurrent
    /// layers (per direction W, U, b), head (weight, bias).
    pub fn blocks(&self) -> Vec<&ParamBlock> {
        let mut v: Vec<&ParamBlock> = Vec::new();
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        for r in &self.recurrents {
            v.extend(r.blocks());
        }
        v.push(&self.head_weight);
        v.push(&self.head_bias);
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut v: Vec<&mut ParamBlock> = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        for r in &mut self.recurrents {
            v.extend(r.blocks_mut());
        }
        v.push(&mut self.head_weight);
        v.push(&mut self.head_bias);
        v
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.blocks().iter().map(|b| vec![0.0; b.values.len()]).collect()
    }

    /// Forward pass. Passing `rng` selects training mode (dropout active).
    pub fn forward(&self, input: &Tensor, mut rng: Option<&mut NnRng>) -> Result<ForwardTrace, NnError> {
        if input.shape().len() != 2 || input.cols() != self.spec.input_features {
            return Err(NnError::DimensionMismatch(format!(
                "model expects [T, {}], got {:?}",
                self.spec.input_features,
                input.shape()
            )));
        }
        let min = self.spec.min_input_len();
        if input.rows() < min {
            return Err(NnError::InputTooShort { len: input.rows(), min });
        }
        let mut activations = vec![input.clone()];
        for conv in &self.convs {
            let next = conv.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let mut recurrent = Vec::with_capacity(self.recurrents.len());
        let mut seq = activations.last().expect("non-empty").clone();
        for layer in &self.recurrents {
            let (out, trace) = layer.forward(&seq, rng.as_deref_mut())?;
            recurrent.push(trace);
            seq = out;
        }
        let head_input = match (self.recurrents.last(), recurrent.last()) {
            (Some(layer), Some(trace)) => trace.final_state(layer.spec.hidden_units),
            _ => seq.row(seq.rows() - 1).to_vec(),
        };
        let logit = self.head_bias.values[0]
            + self.head_weight.values.iter().zip(&head_input).map(|(a, b)| a * b).sum::<f64>();
        Ok(ForwardTrace { activations, recurrent, head_input, logit, probability: sigmoid(logit) })
    }

    /// Evaluation-mode probability of the positive class.
    pub fn predict(&self, input: &Tensor) -> Result<f64, NnError> {
        self.forward(input, None).map(|t| t.probability)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d logit`.
    pub fn backward(&self, trace: &ForwardTrace, d_logit: f64, grads: &mut [Vec<f64>]) {
        let n_blocks = grads.len();
        let (head_w, head_b) = (n_blocks - 2, n_blocks - 1);
        grads[head_w].iter_mut().zip(&trace.head_input).for_each(|(g, v)| *g += d_logit * v);
        grads[head_b][0] += d_logit;
        let d_head: Vec<f64> = self.head_weight.values.iter().map(|w| d_logit * w).collect();

        let conv_blocks = 2 * self.convs.len();
        let conv_out = trace.activations.last().expect("non-empty");
        let mut d_seq = if self.recurrents.is_empty() {
            let mut d = Tensor::zeros(conv_out.shape().to_vec());
            d.row_mut(conv_out.rows() - 1).copy_from_slice(&d_head);
            d
        } else {
            let mut offset = conv_blocks + self.recurrents.iter().map(|r| r.block_count()).sum::<usize>();
            let mut d_out: Option<Tensor> = None;
            for (i, (layer, tr)) in self.recurrents.iter().zip(&trace.recurrent).enumerate().rev() {
                offset -= layer.block_count();
                let width = layer.spec.output_width();
                let d_final = if i + 1 == self.recurrents.len() { d_head.clone() } else { vec![0.0; width] };
                let dx =
                    layer.backward(tr, d_out.as_ref(), &d_final, &mut grads[offset..offset + layer.block_count()]);
                d_out = Some(dx);
            }
            d_out.expect("at least one recurrent layer")
        };
        for (i, conv) in self.convs.iter().enumerate().rev() {
            d_seq = conv.backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &d_seq,
                &mut grads[2 * i..2 * i + 2],
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_parameter_count() {
        let spec = ModelSpec::standard(17);
        // conv: 17*5*8+8, 8*3*16+16; gru: 2 dirs * 3 * (in*32 + 32*32 + 32); head 64+1
        let closed = (17 * 5 * 8 + 8)
            + (8 * 3 * 16 + 16)
            + 2 * 3 * (16 * 32 + 32 * 32 + 32)
            + 2 * 3 * (64 * 32 + 32 * 32 + 32)
            + (2 * 32 + 1);
        assert_eq!(closed, 29185);
        assert_eq!(spec.param_count(), closed);
        assert_eq!(Model::new(spec, 1).unwrap().param_count(), closed);
        assert_eq!(ModelSpec::standard(17).min_input_len(), 15);
    }

    #[test]
    fn zero_model_outputs_half() {
        let model = Model::zeroed(ModelSpec::standard(4)).unwrap();
        let x = Tensor::matrix(30, 4, (0..120).map(|v| (v as f64).cos() * 10.0).collect()).unwrap();
        assert_eq!(model.predict(&x).unwrap(), 0.5);
    }

    #[test]
    fn short_input_rejected() {
        let model = Model::new(ModelSpec::standard(4), 0).unwrap();
        let x = Tensor::matrix(14, 4, vec![0.0; 56]).unwrap();
        assert_eq!(model.predict(&x), Err(NnError::InputTooShort { len: 14, min: 15 }));
        let x = Tensor::matrix(15, 3, vec![0.0; 45]).unwrap();
        assert!(matches!(model.predict(&x), Err(NnError::DimensionMismatch(_))));
    }

    #[test]
    fn inconsistent_spec_rejected() {
        let mut spec = ModelSpec::standard(4);
        spec.conv_layers[1].in_channels = 7;
        assert!(Model::new(spec, 0).is_err());
    }

    #[test]
    fn spec_hash_tracks_changes() {
        let a = ModelSpec::standard(17);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.recurrent_layers[0].hidden_units = 16;
        assert_ne!(a.hash(), b.hash());
    }
}
