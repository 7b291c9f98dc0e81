//! Feature-extractor building blocks, each with a forward kernel and a tape
//! node for its gradient.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
mod model;
pub mod pool;

use std::fmt;

use crate::error::Result;
use crate::numerics::{Backward, Tensor};

pub use activation::relu_forward;
pub use batchnorm::{batchnorm_infer, batchnorm_train};
pub use conv::conv_forward;
pub use dense::dense_forward;
pub use dropout::dropout_forward;
pub use loss::mse_loss;
pub use model::{map_after, FeatureExtractorModel, ForwardPass, InputShape, Mode};
pub use pool::maxpool_forward;

/// Architecture of one layer, without learned state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv1d { filter_len: usize, planes: usize },
    Conv2d { filter_h: usize, filter_w: usize, planes: usize },
    MaxPool { window: usize },
    BatchNorm,
    Dropout { rate: f64 },
    Relu,
    Flatten,
    Dense { out_dim: usize },
}

impl LayerSpec {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. })
    }
}

/// Renders the line form used by model spec files.
impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv1d { filter_len, planes } => write!(f, "conv1d {filter_len} {planes}"),
            LayerSpec::Conv2d {
                filter_h,
                filter_w,
                planes,
            } => write!(f, "conv2d {filter_h}x{filter_w} {planes}"),
            LayerSpec::MaxPool { window } => write!(f, "maxpool {window}"),
            LayerSpec::BatchNorm => write!(f, "batchnorm"),
            LayerSpec::Dropout { rate } => write!(f, "dropout {rate}"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Dense { out_dim } => write!(f, "dense {out_dim}"),
        }
    }
}

/// Convolution filters `[out_planes, in_planes, kh, kw]` and per-plane bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub two_d: bool,
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(planes: usize) -> Self {
        BatchNormLayer {
            gamma: Tensor::full(&[planes], 1.0),
            beta: Tensor::zeros(&[planes]),
            running_mean: vec![0.0; planes],
            running_var: vec![1.0; planes],
        }
    }

    pub fn planes(&self) -> usize {
        self.gamma.len()
    }
}

/// Dense weights `[out, in]` and bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A layer with its learned state.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    MaxPool { window: usize, two_d: bool },
    BatchNorm(BatchNormLayer),
    Dropout { rate: f64 },
    Relu,
    Flatten,
    Dense(DenseLayer),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => {
                let s = c.weight.shape();
                if c.two_d {
                    LayerSpec::Conv2d {
                        filter_h: s[2],
                        filter_w: s[3],
                        planes: s[0],
                    }
                } else {
                    LayerSpec::Conv1d {
                        filter_len: s[3],
                        planes: s[0],
                    }
                }
            }
            Layer::MaxPool { window, .. } => LayerSpec::MaxPool { window: *window },
            Layer::BatchNorm(_) => LayerSpec::BatchNorm,
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense {
                out_dim: d.weight.shape()[0],
            },
        }
    }

    /// Learned parameters in a fixed order (weights before biases, scale before shift).
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Connection weights only: filters and dense matrices, no biases or
    /// normalization parameters.
    pub fn weight_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.weight.len(),
            Layer::Dense(d) => d.weight.len(),
            _ => 0,
        }
    }
}

pub(crate) struct FlattenBackward;

impl Backward for FlattenBackward {
    fn name(&self) -> &'static str {
        "flatten"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![grad_out.clone().reshape(inputs[0].shape().to_vec())?])
    }
}

/// Row-major linearization of everything after the batch axis.
pub fn flatten(input: &Tensor) -> Tensor {
    let n = input.shape()[0];
    let rest = if input.rank() > 1 { input.len() / n } else { 1 };
    input
        .clone()
        .reshape(vec![n, rest])
        .expect("flatten preserves length")
}
