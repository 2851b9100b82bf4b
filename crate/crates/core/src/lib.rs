//! Scale-channel convolutional networks.
//!
//! * [`tensor`]: dense tensors with hand-written reverse passes for the
//!   layer set the networks use, Adam, and parameter checkpoints.
//! * [`scalespace`]: Gaussian kernels, Hermite-form Gaussian derivatives,
//!   scale-normalised derivatives and center-anchored resampling.
//! * [`dataset`]: IDX reader and the deterministic MNIST Large Scale
//!   generator with its on-disk format.
//! * [`nets`]: the baseline CNN and the foveated (max / avg / concat) and
//!   sliding-window scale-channel networks, plus covariance probes.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below name the two instantiations.

pub mod dataset;
pub mod error;
pub mod nets;
pub mod scalar;
pub mod scalespace;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type GridImage32 = scalespace::GridImage<f32>;
pub type GridImage64 = scalespace::GridImage<f64>;
pub type ChannelNet32 = nets::ChannelNet<f32>;
pub type ChannelNet64 = nets::ChannelNet<f64>;
