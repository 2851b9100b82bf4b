//! Dense tensors and the layer set needed by the networks: convolution,
//! batch normalisation, ReLU, dense, dropout and softmax cross-entropy, each
//! with a hand-written reverse pass, plus the Adam optimiser and a binary
//! checkpoint format.
//!
//! Reverse mode is organised per layer: a forward call returns the output
//! together with whatever the backward pass needs (a [`Tape`] for a whole
//! [`Sequential`]), and the backward call consumes it, accumulating
//! parameter gradients into the parameters' `grad` buffers. Running the same
//! layer several times before a backward pass therefore sums the gradients,
//! which is exactly how weight sharing between scale channels is realised.

mod activation;
mod adam;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod dense;
mod init;
mod layers;

pub use activation::{
    cross_entropy_with_logits, dropout_backward, dropout_forward, relu_backward, relu_forward, softmax_backward,
    softmax_rows,
};
pub use adam::{Adam, AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm2d_backward, batchnorm2d_forward, BatchNorm2d, BatchNormCache, BATCHNORM_EPS, BATCHNORM_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_size, Conv2d};
pub use dense::{dense_backward, dense_forward, Dense};
pub use init::he_normal;
pub use layers::{Layer, LayerKind, LayerSpec, Sequential, Tape};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Whether layers behave as during training (batch statistics, dropout
/// active) or inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense row-major n-dimensional array with an optional gradient buffer.
///
/// Image tensors are laid out `(batch, channel, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", "element count", numel, data.len()));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// A trainable tensor with a zeroed gradient buffer.
    pub fn parameter(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let mut t = Self::from_vec(shape, data)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if on && self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Adds `g` into the gradient buffer (allocating it if needed).
    pub fn accumulate_grad(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::shape(
                "accumulate_grad",
                "element count",
                self.data.len(),
                g.len(),
            ));
        }
        for (dst, &src) in self.grad_mut().iter_mut().zip(g) {
            *dst += src;
        }
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape("reshape", "element count", self.data.len(), numel));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::shape(op, "rank", 2, self.rank())),
        }
    }

    pub fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::shape(op, "rank", 4, self.rank())),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite()) && self.grad.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Element-wise precision conversion; the gradient buffer is dropped.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff: shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("element count"));
    }

    #[test]
    fn grad_buffer_tracks_shape() {
        let mut p = Tensor::<f32>::parameter(&[2, 2], vec![1.0; 4]).unwrap();
        p.accumulate_grad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        p.accumulate_grad(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        p.zero_grad();
        assert_eq!(p.grad().unwrap(), &[0.0; 4]);
        assert!(p.accumulate_grad(&[0.0; 3]).is_err());
    }

    #[test]
    fn dims4_names_rank() {
        let t = Tensor::<f64>::zeros(&[3, 4]);
        assert!(t.dims4("conv2d").unwrap_err().to_string().contains("rank"));
    }
}
