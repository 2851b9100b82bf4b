use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Floating-point width used for training and evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl TryFrom<u32> for Precision {
    type Error = String;

    fn try_from(bits: u32) -> Result<Self, String> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(format!("precision must be 32 or 64, got {other}")),
        }
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        match p {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

/// Optimisation schedule. The learning rate at epoch `e` (0-based) is
/// `max(lr_min, lr_start * decay^e)`; with `step_decay` the exponent is
/// rounded down to an even number, so the rate drops by `decay^2` every
/// second epoch instead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_min: f64,
    pub decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub step_decay: bool,
}

impl Default for TrainSchedule {
    /// 20 epochs, Adam from 3e-3 decaying by `1/e` every two epochs down
    /// to 5e-5, dropout 0.15 on the first dense layer.
    fn default() -> Self {
        TrainSchedule {
            epochs: 20,
            lr_start: 3e-3,
            lr_min: 5e-5,
            decay: (-0.5f64).exp(),
            dropout: 0.15,
            batch_size: 128,
            seed: 0,
            precision: Precision::F32,
            step_decay: false,
        }
    }
}

impl TrainSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let e = if self.step_decay { epoch / 2 * 2 } else { epoch };
        (self.lr_start * self.decay.powi(e as i32)).max(self.lr_min)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(format!("schedule: {m}")));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_start) {
            return bad("need 0 < lr_min <= lr_start");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch normalisation)");
        }
        Ok(())
    }

    /// Human-readable dump, one `key = value` per line.
    pub fn describe(&self) -> String {
        format!(
            "epochs = {}\nlr_start = {:e}\nlr_min = {:e}\ndecay = {} (per epoch{})\ndropout = {}\nbatch_size = {}\nseed = {}\nprecision = {}\n",
            self.epochs,
            self.lr_start,
            self.lr_min,
            self.decay,
            if self.step_decay { ", applied every second epoch" } else { "" },
            self.dropout,
            self.batch_size,
            self.seed,
            u32::from(self.precision)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_law_closed_form() {
        let s = TrainSchedule::default();
        for e in 0..40 {
            let expected = f64::max(5e-5, 3e-3 * (-(e as f64) / 2.0).exp());
            assert!((s.lr(e) - expected).abs() <= 1e-15 * expected, "epoch {e}");
            assert!(s.lr(e + 1) <= s.lr(e));
        }
        assert_eq!(s.lr(100), 5e-5);
    }

    #[test]
    fn step_decay_agrees_on_even_epochs() {
        let smooth = TrainSchedule::default();
        let step = TrainSchedule {
            step_decay: true,
            ..smooth
        };
        for e in (0..20).step_by(2) {
            assert_eq!(smooth.lr(e), step.lr(e));
            assert_eq!(step.lr(e + 1), step.lr(e));
        }
    }

    #[test]
    fn precision_parses_bits() {
        assert_eq!(Precision::try_from(64).unwrap(), Precision::F64);
        assert!(Precision::try_from(16).is_err());
    }
}
