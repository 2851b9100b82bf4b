//! Scale-channel networks.
//!
//! A single base network is applied to copies of the input magnified by
//! each scale of a [`ScaleGrid`]. Foveated networks crop every magnified
//! copy to a fixed support around the image center and pool the channel
//! outputs (max, average, or concatenation followed by a mixing layer);
//! sliding-window networks run the base net fully convolutionally over each
//! whole rescaled image and take the maximum over positions and scales.
//!
//! ```text
//!   f (H x H) ──► magnify by γ^i ──► crop support ──► base net ──► p_i ─┐
//!                  (channel i)        (foveated)                       ├─► pool ──► scores
//!   object of scale γ^{-i}  ──►  unit scale in channel i             ─┘
//! ```

mod grid;
mod net;
mod probe;
mod rescale;
mod spec;

pub use grid::ScaleGrid;
pub use net::{ChannelNet, ForwardCache, NetOutput, PROB_FLOOR};
pub use probe::{
    channel_activations, covariance_probe, shared_batchnorm_statistics, ChannelActivations, CovarianceReport,
    ProbeDepth,
};
pub use rescale::{channel_inputs, magnify_batch};
pub use spec::{
    build_baseline_cnn, build_scale_channel_net, conv_plan, Aggregation, ChannelNetSpec, PoolSpace, CHANNEL_SUPPORT,
    DEFAULT_DROPOUT, NUM_CLASSES,
};
