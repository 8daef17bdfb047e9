use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{NnError, ParamBlock, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl Conv1dSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::InvalidSpec(format!("conv layer {self:?}")));
        }
        Ok(())
    }

    /// `floor((len - kernel) / stride) + 1`, or `None` when `len < kernel`.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.kernel).then(|| (len - self.kernel) / self.stride + 1)
    }

    pub fn param_count(&self) -> usize {
        self.in_channels * self.kernel * self.out_channels + self.out_channels
    }
}

/// Strided valid convolution over time. Weights are `[out, kernel, in]`.
pub fn conv1d_forward(input: &Tensor, spec: &Conv1dSpec, weight: &[f64], bias: &[f64]) -> Result<Tensor, NnError> {
    spec.validate()?;
    if input.shape().len() != 2 || input.cols() != spec.in_channels {
        return Err(NnError::DimensionMismatch(format!(
            "conv expects [T, {}], got {:?}",
            spec.in_channels,
            input.shape()
        )));
    }
    if weight.len() != spec.out_channels * spec.kernel * spec.in_channels || bias.len() != spec.out_channels {
        return Err(NnError::DimensionMismatch("conv parameter sizes".into()));
    }
    let t_out = spec
        .output_len(input.rows())
        .ok_or(NnError::InputTooShort { len: input.rows(), min: spec.kernel })?;
    let win = spec.kernel * spec.in_channels;
    let x = input.data();
    let mut out = Vec::with_capacity(t_out * spec.out_channels);
    for t in 0..t_out {
        let start = t * spec.stride * spec.in_channels;
        let window = &x[start..start + win];
        for (o, b) in bias.iter().enumerate() {
            let w = &weight[o * win..(o + 1) * win];
            let mut acc = *b;
            for (a, c) in w.iter().zip(window) {
                acc += a * c;
            }
            if spec.activation == Activation::Relu && acc < 0.0 {
                acc = 0.0;
            }
            out.push(acc);
        }
    }
    Tensor::matrix(t_out, spec.out_channels, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub spec: Conv1dSpec,
    pub weight: ParamBlock,
    pub bias: ParamBlock,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(spec: Conv1dSpec, index: usize, rng: &mut R) -> Self {
        let Conv1dSpec { in_channels: c_in, out_channels: c_out, kernel: k, .. } = spec;
        Self {
            spec,
            weight: ParamBlock::new(
                format!("conv{index}.weight"),
                vec![c_out, k, c_in],
                glorot_uniform(rng, c_out * k * c_in, c_in * k, c_out * k),
            ),
            bias: ParamBlock::zeros(format!("conv{index}.bias"), vec![c_out]),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        conv1d_forward(input, &self.spec, &self.weight.values, &self.bias.values)
    }

    /// Accumulates parameter gradients into `grads` (`[weight, bias]`) and
    /// returns the input gradient.
    pub fn backward(&self, input: &Tensor, output: &Tensor, d_output: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
        let spec = &self.spec;
        let win = spec.kernel * spec.in_channels;
        let mut dx = Tensor::zeros(input.shape().to_vec());
        let (gw, gb) = grads.split_at_mut(1);
        let (gw, gb) = (&mut gw[0], &mut gb[0]);
        let x = input.data();
        for t in 0..output.rows() {
            let start = t * spec.stride * spec.in_channels;
            let y = output.row(t);
            let dy = d_output.row(t);
            for o in 0..spec.out_channels {
                let mut g = dy[o];
                if spec.activation == Activation::Relu && y[o] <= 0.0 {
                    g = 0.0;
                }
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let w = &self.weight.values[o * win..(o + 1) * win];
                let gw_o = &mut gw[o * win..(o + 1) * win];
                for i in 0..win {
                    gw_o[i] += g * x[start + i];
                }
                let dxw = &mut dx.data_mut()[start..start + win];
                for i in 0..win {
                    dxw[i] += g * w[i];
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_stack_lengths() {
        let c1 = Conv1dSpec { in_channels: 17, out_channels: 8, kernel: 5, stride: 5, activation: Activation::Relu };
        let c2 = Conv1dSpec { in_channels: 8, out_channels: 16, kernel: 3, stride: 3, activation: Activation::Relu };
        assert_eq!(c1.output_len(1000), Some(200));
        assert_eq!(c2.output_len(200), Some(66));
        assert_eq!(c1.output_len(4), None);
    }

    #[test]
    fn identity_kernel() {
        let spec = Conv1dSpec { in_channels: 3, out_channels: 3, kernel: 1, stride: 1, activation: Activation::None };
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::matrix(4, 3, (0..12).map(|v| v as f64 - 5.0).collect()).unwrap();
        assert_eq!(conv1d_forward(&x, &spec, &w, &[0.0; 3]).unwrap(), x);
    }

    #[test]
    fn relu_clamps() {
        let spec = Conv1dSpec { in_channels: 1, out_channels: 1, kernel: 2, stride: 2, activation: Activation::Relu };
        let x = Tensor::matrix(4, 1, vec![1.0, 2.0, -3.0, -4.0]).unwrap();
        let y = conv1d_forward(&x, &spec, &[1.0, 1.0], &[0.5]).unwrap();
        assert_eq!(y.data(), &[3.5, 0.0]);
    }

    #[test]
    fn too_short() {
        let spec = Conv1dSpec { in_channels: 1, out_channels: 1, kernel: 5, stride: 5, activation: Activation::Relu };
        let x = Tensor::matrix(4, 1, vec![0.0; 4]).unwrap();
        assert_eq!(
            conv1d_forward(&x, &spec, &[0.0; 5], &[0.0]),
            Err(NnError::InputTooShort { len: 4, min: 5 })
        );
    }
}
