use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric set of channel magnifications `{γ^i : i ∈ [min_exponent,
/// max_exponent]}`.
///
/// Channel `i` magnifies its input by `γ^i` before cropping the support
/// region, so it brings an object of scale `γ^{-i}` (relative to the base
/// net's training size) to unit scale. [`ScaleGrid::object_scales`] lists
/// those object scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub gamma: f64,
    pub min_exponent: i32,
    pub max_exponent: i32,
}

impl ScaleGrid {
    pub fn new(gamma: f64, min_exponent: i32, max_exponent: i32) -> Result<Self> {
        let grid = ScaleGrid {
            gamma,
            min_exponent,
            max_exponent,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// One channel with magnification 1.
    pub fn unit() -> Self {
        ScaleGrid {
            gamma: 2.0,
            min_exponent: 0,
            max_exponent: 0,
        }
    }

    /// Grid whose object scales run from `object_min` to `object_max` in
    /// steps of `gamma`; both ends must be integer powers of `gamma`.
    pub fn spanning(object_min: f64, object_max: f64, gamma: f64) -> Result<Self> {
        let exp = |v: f64| {
            let e = -v.ln() / gamma.ln();
            let r = e.round();
            if (e - r).abs() > 1e-9 {
                Err(Error::InvalidArgument(format!(
                    "object scale {v} is not a power of {gamma}"
                )))
            } else {
                Ok(r as i32)
            }
        };
        Self::new(gamma, exp(object_max)?, exp(object_min)?)
    }

    /// 17 channels at `γ = 2^{1/4}` covering object scales `[1/2, 8]`.
    pub fn standard() -> Self {
        ScaleGrid {
            gamma: 2f64.powf(0.25),
            min_exponent: -12,
            max_exponent: 4,
        }
    }

    /// Three channels at `γ = 2` covering object scales `{1, 2, 4}`.
    pub fn concat_default() -> Self {
        ScaleGrid {
            gamma: 2.0,
            min_exponent: -2,
            max_exponent: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid ratio must exceed 1, got {}",
                self.gamma
            )));
        }
        if self.min_exponent > self.max_exponent {
            return Err(Error::InvalidArgument(format!(
                "empty grid: exponents {}..={}",
                self.min_exponent, self.max_exponent
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.max_exponent - self.min_exponent + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn exponents(&self) -> std::ops::RangeInclusive<i32> {
        self.min_exponent..=self.max_exponent
    }

    /// Channel magnifications, strictly increasing.
    pub fn scales(&self) -> Vec<f64> {
        self.exponents().map(|i| self.gamma.powi(i)).collect()
    }

    /// Object scale each channel normalises, `1 / scale`, strictly
    /// decreasing in channel order.
    pub fn object_scales(&self) -> Vec<f64> {
        self.exponents().map(|i| self.gamma.powi(-i)).collect()
    }

    /// Channel-index shift `k` with `t = γ^k`, if `t` is a grid power.
    pub fn shift_for_ratio(&self, t: f64) -> Option<i32> {
        let k = t.ln() / self.gamma.ln();
        let r = k.round();
        ((k - r).abs() < 1e-9).then_some(r as i32)
    }
}
