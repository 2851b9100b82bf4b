//! Declarative layer plans and the sequential container built from them.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{
    dropout_backward, dropout_forward, relu_backward, relu_forward, BatchNorm2d, BatchNormCache, Conv2d, Dense, Mode,
    Tensor,
};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Batchnorm2d,
    Relu,
    Dense,
    Dropout,
    Softmax,
}

/// One entry of a layer plan. Fields that do not apply to a kind are
/// ignored (`out_channels` doubles as the width of a dense layer).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub out_channels: usize,
    #[serde(default = "one")]
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub rate: f64,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    fn plain(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            out_channels: 0,
            kernel_size: 1,
            stride: 1,
            padding: 0,
            rate: 0.0,
        }
    }

    pub fn conv(out_channels: usize, kernel_size: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            out_channels,
            kernel_size,
            stride,
            padding,
            ..Self::plain(LayerKind::Conv2d)
        }
    }

    pub fn batchnorm() -> Self {
        Self::plain(LayerKind::Batchnorm2d)
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn dense(width: usize) -> Self {
        LayerSpec {
            out_channels: width,
            ..Self::plain(LayerKind::Dense)
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec {
            rate,
            ..Self::plain(LayerKind::Dropout)
        }
    }

    pub fn softmax() -> Self {
        Self::plain(LayerKind::Softmax)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Conv2d => {
                if self.stride == 0 {
                    return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
                }
                if self.kernel_size.is_multiple_of(2) {
                    return Err(Error::InvalidArgument(format!(
                        "conv2d kernel size {} is not odd",
                        self.kernel_size
                    )));
                }
                if self.out_channels == 0 {
                    return Err(Error::InvalidArgument("conv2d needs out_channels > 0".into()));
                }
            }
            LayerKind::Dense if self.out_channels == 0 => {
                return Err(Error::InvalidArgument("dense needs a width > 0".into()));
            }
            LayerKind::Dropout if !(0.0..1.0).contains(&self.rate) => {
                return Err(Error::InvalidArgument(format!(
                    "dropout rate {} outside [0, 1)",
                    self.rate
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Relu,
    Dense(Dense<T>),
    Dropout(f64),
}

#[derive(Clone, Debug)]
enum Saved<T> {
    Input(Tensor<T>),
    BatchNorm(BatchNormCache<T>),
    Mask(Option<Vec<T>>),
}

/// Everything one forward pass of a [`Sequential`] saved for its backward
/// pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    saved: Vec<Saved<T>>,
}

impl<T> Tape<T> {
    pub fn len(&self) -> usize {
        self.saved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.saved.is_empty()
    }
}

/// A chain of layers. The final softmax of a plan is not a layer here:
/// `forward` returns logits and the caller applies softmax or the loss.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
    input_shape: [usize; 3],
    ends_with_softmax: bool,
}

impl<T: Real> Sequential<T> {
    /// Instantiates a plan for `(channels, height, width)` inputs.
    pub fn build<R: Rng + ?Sized>(plan: &[LayerSpec], input_shape: [usize; 3], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(plan.len());
        let mut shape = input_shape.to_vec();
        let mut ends_with_softmax = false;
        for (idx, spec) in plan.iter().enumerate() {
            spec.validate()?;
            if ends_with_softmax {
                return Err(Error::InvalidArgument(format!(
                    "layer {idx} follows the softmax, which must be last"
                )));
            }
            let layer = match spec.kind {
                LayerKind::Conv2d => {
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => {
                            return Err(Error::InvalidArgument(format!(
                                "conv2d at layer {idx} after a dense layer"
                            )))
                        }
                    };
                    let conv = Conv2d::new(c, spec.out_channels, spec.kernel_size, spec.stride, spec.padding, rng)?;
                    let oh = super::conv_output_size(h, spec.kernel_size, spec.stride, spec.padding);
                    let ow = super::conv_output_size(w, spec.kernel_size, spec.stride, spec.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => shape = vec![spec.out_channels, oh, ow],
                        _ => {
                            return Err(Error::shape(
                                "build",
                                "spatial extent",
                                format!(">= {}", spec.kernel_size),
                                format!("{h}x{w} at layer {idx}"),
                            ))
                        }
                    }
                    Layer::Conv2d(conv)
                }
                LayerKind::Batchnorm2d => {
                    if shape.len() != 3 {
                        return Err(Error::InvalidArgument(format!(
                            "batchnorm2d at layer {idx} needs a feature map"
                        )));
                    }
                    Layer::BatchNorm2d(BatchNorm2d::new(shape[0]))
                }
                LayerKind::Relu => Layer::Relu,
                LayerKind::Dense => {
                    let fin: usize = shape.iter().product();
                    shape = vec![spec.out_channels];
                    Layer::Dense(Dense::new(fin, spec.out_channels, rng)?)
                }
                LayerKind::Dropout => Layer::Dropout(spec.rate),
                LayerKind::Softmax => {
                    ends_with_softmax = true;
                    continue;
                }
            };
            layers.push(layer);
        }
        Ok(Sequential {
            layers,
            input_shape,
            ends_with_softmax,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn ends_with_softmax(&self) -> bool {
        self.ends_with_softmax
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Index one past the `depth`-th ReLU (depth counts from 1), i.e. the
    /// number of layers that produce the depth-`depth` feature map.
    pub fn depth_cutoff(&self, depth: usize) -> Option<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .nth(depth.checked_sub(1)?)
            .map(|(i, _)| i + 1)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<(Tensor<T>, Tape<T>)> {
        let n = self.layers.len();
        self.forward_prefix(input, n, mode, rng)
    }

    /// Runs the first `count` layers only.
    pub fn forward_prefix(
        &mut self,
        input: &Tensor<T>,
        count: usize,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        let mut x = input.clone();
        let mut tape = Tape {
            saved: Vec::with_capacity(count),
        };
        for layer in self.layers.iter_mut().take(count) {
            let (y, saved) = match layer {
                Layer::Conv2d(conv) => (conv.forward(&x)?, Saved::Input(x)),
                Layer::BatchNorm2d(bn) => {
                    let (y, cache) = bn.forward(&x, mode)?;
                    (y, Saved::BatchNorm(cache))
                }
                Layer::Relu => (relu_forward(&x), Saved::Input(x)),
                Layer::Dense(dense) => (dense.forward(&x)?, Saved::Input(x)),
                Layer::Dropout(rate) => {
                    let (y, mask) = dropout_forward(&x, *rate, mode, rng)?;
                    (y, Saved::Mask(mask))
                }
            };
            tape.saved.push(saved);
            x = y;
        }
        Ok((x, tape))
    }

    /// Propagates `grad` back through the layers recorded in `tape`,
    /// accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, tape: Tape<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad;
        let count = tape.saved.len();
        for (layer, saved) in self.layers[..count].iter_mut().zip(tape.saved).rev() {
            g = match (layer, saved) {
                (Layer::Conv2d(conv), Saved::Input(x)) => conv.backward(&g, Some(&x))?,
                (Layer::BatchNorm2d(bn), Saved::BatchNorm(cache)) => bn.backward(&g, Some(&cache))?,
                (Layer::Relu, Saved::Input(x)) => relu_backward(&g, Some(&x))?,
                (Layer::Dense(dense), Saved::Input(x)) => dense.backward(&g, Some(&x))?,
                (Layer::Dropout(_), Saved::Mask(mask)) => dropout_backward(&g, mask.as_deref())?,
                _ => {
                    return Err(Error::MissingActivation {
                        op: "sequential_backward",
                        what: "matching tape entry",
                    })
                }
            };
        }
        Ok(g)
    }

    /// Trainable tensors with stable names, in layer order.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2d(c) => {
                    out.push((format!("layer{i}.weight"), &c.weight));
                    out.push((format!("layer{i}.bias"), &c.bias));
                }
                Layer::Dense(d) => {
                    out.push((format!("layer{i}.weight"), &d.weight));
                    out.push((format!("layer{i}.bias"), &d.bias));
                }
                Layer::BatchNorm2d(b) => {
                    out.push((format!("layer{i}.gamma"), &b.gamma));
                    out.push((format!("layer{i}.beta"), &b.beta));
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weight);
                    out.push(&mut d.bias);
                }
                Layer::BatchNorm2d(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                _ => {}
            }
        }
        out
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm2d(b) = layer {
                out.push((format!("layer{i}.running_mean"), b.running_mean.as_slice()));
                out.push((format!("layer{i}.running_var"), b.running_var.as_slice()));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::BatchNorm2d(b) = layer {
                out.push((format!("layer{i}.running_mean"), &mut b.running_mean));
                out.push((format!("layer{i}.running_var"), &mut b.running_var));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Output widths of the conv and dense layers, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2d(c) => Some(c.weight.shape()[0]),
                Layer::Dense(d) => Some(d.out_features()),
                _ => None,
            })
            .collect()
    }
}
