use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::idx::MnistSplit;
use crate::error::{Error, Result};

pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScaleMode {
    Fixed { s: f64 },
    LogUniform { s_min: f64, s_max: f64 },
}

/// How each generated image's scale factor is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    #[serde(flatten)]
    pub mode: ScaleMode,
    #[serde(default)]
    pub seed: u64,
}

impl ScaleSpec {
    pub fn fixed(s: f64) -> Self {
        ScaleSpec {
            mode: ScaleMode::Fixed { s },
            seed: 0,
        }
    }

    pub fn log_uniform(s_min: f64, s_max: f64, seed: u64) -> Self {
        ScaleSpec {
            mode: ScaleMode::LogUniform { s_min, s_max },
            seed,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self.mode {
            ScaleMode::Fixed { s } => (s, s),
            ScaleMode::LogUniform { s_min, s_max } => (s_min, s_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range();
        let ok = |v: f64| v.is_finite() && (MIN_SCALE..=MAX_SCALE).contains(&v);
        if !ok(lo) || !ok(hi) || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "scale range [{lo}, {hi}] must lie within [{MIN_SCALE}, {MAX_SCALE}]"
            )));
        }
        Ok(())
    }

    /// Scale of the image at `index` of the given source set. Each image
    /// gets its own ChaCha8 stream keyed by `(seed, source, index)`, so a
    /// subset draws the same scales as the full set.
    pub fn scale_for(&self, source: MnistSplit, index: usize) -> f64 {
        match self.mode {
            ScaleMode::Fixed { s } => s,
            ScaleMode::LogUniform { s_min, s_max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let offset = match source {
                    MnistSplit::Train => 0u64,
                    MnistSplit::Test => 1 << 32,
                };
                rng.set_stream(offset + index as u64);
                let u: f64 = rng.random();
                s_min * (s_max / s_min).powf(u)
            }
        }
    }
}

/// Which source records a generated set covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "snake_case")]
pub enum Split {
    /// First 50 000 training digits.
    Train,
    /// Last 10 000 training digits.
    Val,
    /// The whole test set.
    Test,
    /// Arbitrary contiguous slice of either source set.
    Range {
        source: MnistSplit,
        start: usize,
        end: usize,
    },
}

pub const TRAIN_COUNT: usize = 50_000;
pub const MNIST_TRAIN_TOTAL: usize = 60_000;
pub const MNIST_TEST_TOTAL: usize = 10_000;

impl Split {
    pub fn source(&self) -> MnistSplit {
        match *self {
            Split::Train | Split::Val => MnistSplit::Train,
            Split::Test => MnistSplit::Test,
            Split::Range { source, .. } => source,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Split::Train => "train".into(),
            Split::Val => "val".into(),
            Split::Test => "test".into(),
            Split::Range { source, start, end } => format!("{source:?}[{start}..{end}]").to_lowercase(),
        }
    }

    /// Source indices covered, checked against the source length.
    pub fn indices(&self, source_len: usize) -> Result<std::ops::Range<usize>> {
        let (range, need) = match *self {
            Split::Train => (0..TRAIN_COUNT, Some(MNIST_TRAIN_TOTAL)),
            Split::Val => (TRAIN_COUNT..MNIST_TRAIN_TOTAL, Some(MNIST_TRAIN_TOTAL)),
            Split::Test => (0..source_len, Some(MNIST_TEST_TOTAL)),
            Split::Range { start, end, .. } => (start..end, None),
        };
        if let Some(n) = need {
            if source_len != n {
                return Err(Error::InvalidArgument(format!(
                    "split {} expects a source of {n} records, got {source_len}",
                    self.name()
                )));
            }
        }
        if range.start > range.end || range.end > source_len {
            return Err(Error::InvalidArgument(format!(
                "split {} out of bounds for {source_len} records",
                self.name()
            )));
        }
        Ok(range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_scale_is_constant() {
        let spec = ScaleSpec::fixed(2.0);
        assert_eq!(spec.scale_for(MnistSplit::Train, 17), 2.0);
    }

    #[test]
    fn draws_stay_in_range_and_depend_on_source() {
        let spec = ScaleSpec::log_uniform(1.0, 4.0, 7);
        for i in 0..200 {
            let s = spec.scale_for(MnistSplit::Train, i);
            assert!((1.0..=4.0).contains(&s));
        }
        assert_ne!(
            spec.scale_for(MnistSplit::Train, 3),
            spec.scale_for(MnistSplit::Test, 3)
        );
        assert_eq!(
            spec.scale_for(MnistSplit::Train, 3),
            spec.scale_for(MnistSplit::Train, 3)
        );
    }

    #[test]
    fn validation() {
        assert!(ScaleSpec::fixed(0.25).validate().is_err());
        assert!(ScaleSpec::log_uniform(4.0, 1.0, 0).validate().is_err());
        assert!(ScaleSpec::log_uniform(0.5, 8.0, 0).validate().is_ok());
    }

    #[test]
    fn split_bounds() {
        assert_eq!(Split::Train.indices(60_000).unwrap(), 0..50_000);
        assert_eq!(Split::Val.indices(60_000).unwrap(), 50_000..60_000);
        assert!(Split::Train.indices(10_000).is_err());
        let r = Split::Range {
            source: MnistSplit::Test,
            start: 9000,
            end: 10_000,
        };
        assert_eq!(r.indices(10_000).unwrap(), 9000..10_000);
        assert!(r.indices(9_500).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = ScaleSpec::log_uniform(1.0, 4.0, 9);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<ScaleSpec>(&text).unwrap(), spec);
        let fixed: ScaleSpec = toml::from_str("mode = \"fixed\"\ns = 2.0\n").unwrap();
        assert_eq!(fixed, ScaleSpec::fixed(2.0));
    }
}
