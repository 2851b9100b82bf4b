use serde::{Deserialize, Serialize};

use super::grid::ScaleGrid;
use crate::error::{Error, Result};
use crate::tensor::{LayerKind, LayerSpec};

pub const NUM_CLASSES: usize = 10;
/// Crop fed to each scale channel; the size of an unscaled source digit.
pub const CHANNEL_SUPPORT: usize = 28;
pub const DEFAULT_DROPOUT: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Max,
    Avg,
    Concat,
    SlidingWindowMax,
}

impl Aggregation {
    pub fn model_id(&self) -> &'static str {
        match self {
            Aggregation::Max => "fov_max",
            Aggregation::Avg => "fov_avg",
            Aggregation::Concat => "fov_conc",
            Aggregation::SlidingWindowMax => "sw_max",
        }
    }
}

/// What the channels' outputs are pooled in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSpace {
    Logits,
    #[default]
    Probabilities,
}

/// Declarative description of a scale-channel network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelNetSpec {
    pub base_layers: Vec<LayerSpec>,
    pub grid: ScaleGrid,
    pub aggregation: Aggregation,
    /// Side of the square crop each channel feeds the base net.
    pub support: usize,
    #[serde(default)]
    pub pool_space: PoolSpace,
}

impl ChannelNetSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.support == 0 {
            return Err(Error::InvalidArgument("support must be positive".into()));
        }
        for l in &self.base_layers {
            l.validate()?;
        }
        let has_bn = self.base_layers.iter().any(|l| l.kind == LayerKind::Batchnorm2d);
        if self.aggregation == Aggregation::SlidingWindowMax && has_bn {
            return Err(Error::InvalidArgument(
                "sliding-window networks carry no batch normalisation".into(),
            ));
        }
        match self.base_layers.last() {
            Some(l) if l.kind == LayerKind::Softmax => {}
            _ => return Err(Error::InvalidArgument("base plan must end with a softmax".into())),
        }
        Ok(())
    }

    /// Model identifier used in metrics files.
    pub fn model_id(&self) -> String {
        if self.grid.len() == 1 && self.aggregation == Aggregation::Max && self.support != CHANNEL_SUPPORT {
            "cnn".into()
        } else {
            self.aggregation.model_id().into()
        }
    }
}

/// `conv(3x3) - batchnorm - relu` blocks with stride 2 in every second conv,
/// then `dense(100) - relu - dropout - dense(10) - softmax`.
pub fn conv_plan(widths: &[usize], batchnorm: bool, dropout: f64) -> Vec<LayerSpec> {
    let mut plan = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        let stride = if i % 2 == 1 { 2 } else { 1 };
        plan.push(LayerSpec::conv(w, 3, stride, 0));
        if batchnorm {
            plan.push(LayerSpec::batchnorm());
        }
        plan.push(LayerSpec::relu());
    }
    plan.push(LayerSpec::dense(100));
    plan.push(LayerSpec::relu());
    if dropout > 0.0 {
        plan.push(LayerSpec::dropout(dropout));
    }
    plan.push(LayerSpec::dense(NUM_CLASSES));
    plan.push(LayerSpec::softmax());
    plan
}

/// Eight-block CNN (widths 16-16-16-16-32-32-32-32-100-10) applied to the
/// whole `input_size` frame as a single channel.
pub fn build_baseline_cnn(input_size: usize) -> ChannelNetSpec {
    ChannelNetSpec {
        base_layers: conv_plan(&[16, 16, 16, 16, 32, 32, 32, 32], true, DEFAULT_DROPOUT),
        grid: ScaleGrid::unit(),
        aggregation: Aggregation::Max,
        support: input_size,
        pool_space: PoolSpace::Probabilities,
    }
}

/// Four-block base net (widths 16-16-32-32-100-10) on a 28-pixel support,
/// shared by every channel of `grid`.
pub fn build_scale_channel_net(aggregation: Aggregation, grid: ScaleGrid) -> ChannelNetSpec {
    let batchnorm = aggregation != Aggregation::SlidingWindowMax;
    ChannelNetSpec {
        base_layers: conv_plan(&[16, 16, 32, 32], batchnorm, DEFAULT_DROPOUT),
        grid,
        aggregation,
        support: CHANNEL_SUPPORT,
        pool_space: PoolSpace::Probabilities,
    }
}
