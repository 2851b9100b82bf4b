//! TOML experiment configuration.
//!
//! ```toml
//! out_dir = "runs/desk"
//!
//! [data]
//! out_size = 112
//! train = { split = "range", source = "test", start = 0, end = 2000 }
//! test = { split = "range", source = "test", start = 8000, end = 9000 }
//! train_seed = 1
//! test_seed = 2
//! test_source = { images = "data/desk-mnist/images-idx3-ubyte.gz", labels = "data/desk-mnist/labels-idx1-ubyte.gz" }
//!
//! [schedule]
//! epochs = 5
//! lr_start = 3e-3
//! lr_min = 5e-5
//! decay = 0.6065306597126334
//! dropout = 0.15
//! batch_size = 64
//!
//! [[models]]
//! name = "fov_avg"
//! arch = "fov_avg"
//! grid = { gamma = 1.4142135623730951, min_exponent = -6, max_exponent = 2 }
//!
//! [[experiments]]
//! name = "tr2"
//! models = ["fov_avg"]
//! train = { mode = "fixed", s = 2.0 }
//! test_scales = [1.0, 2.0, 4.0]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! `data.root`, when set, is prefixed to the source paths; a leading `$`
//! names an environment variable (`root = "$MNIST_DIR"`).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use scalechan::dataset::{MnistSplit, ScaleMode, ScaleSpec, Split};
use scalechan::nets::{build_baseline_cnn, build_scale_channel_net, Aggregation, ChannelNetSpec, PoolSpace, ScaleGrid};
use scalechan::tensor::LayerKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::schedule::TrainSchedule;

pub const DESK_CONFIG: &str = include_str!("../../../desk.cfg");
pub const FULL_CONFIG: &str = include_str!("../../../full.cfg");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub root: Option<String>,
    #[serde(default)]
    pub train_source: Option<IdxFiles>,
    #[serde(default)]
    pub test_source: Option<IdxFiles>,
    pub out_size: usize,
    pub train: Split,
    pub test: Split,
    pub train_seed: u64,
    pub test_seed: u64,
    /// Generated datasets; defaults to `<out_dir>/data`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    FovMax,
    FovAvg,
    FovConc,
    SwMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub arch: Arch,
    #[serde(default)]
    pub grid: Option<ScaleGrid>,
    #[serde(default)]
    pub pool_space: PoolSpace,
}

impl ModelConfig {
    /// Network description for frames of `out_size` pixels with the
    /// schedule's dropout rate.
    pub fn net_spec(&self, out_size: usize, dropout: f64) -> Result<ChannelNetSpec> {
        let aggregation = match self.arch {
            Arch::Cnn => None,
            Arch::FovMax => Some(Aggregation::Max),
            Arch::FovAvg => Some(Aggregation::Avg),
            Arch::FovConc => Some(Aggregation::Concat),
            Arch::SwMax => Some(Aggregation::SlidingWindowMax),
        };
        let mut spec = match aggregation {
            None => {
                if self.grid.is_some() {
                    return Err(HarnessError::Config(format!(
                        "model {}: the baseline CNN takes no grid",
                        self.name
                    )));
                }
                build_baseline_cnn(out_size)
            }
            Some(agg) => {
                let grid = self
                    .grid
                    .ok_or_else(|| HarnessError::Config(format!("model {}: a grid is required", self.name)))?;
                build_scale_channel_net(agg, grid)
            }
        };
        spec.pool_space = self.pool_space;
        for layer in spec.base_layers.iter_mut().filter(|l| l.kind == LayerKind::Dropout) {
            layer.rate = dropout;
        }
        if dropout == 0.0 {
            spec.base_layers.retain(|l| l.kind != LayerKind::Dropout);
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub models: Vec<String>,
    pub train: ScaleMode,
    /// Train on the first `n_train` records only.
    #[serde(default)]
    pub n_train: Option<usize>,
    /// Fixed test scales.
    #[serde(default)]
    pub test_scales: Vec<f64>,
    /// Further test distributions (e.g. a log-uniform range).
    #[serde(default)]
    pub test_sets: Vec<ScaleMode>,
    /// Training seeds; defaults to the schedule seed.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn test_modes(&self) -> Vec<ScaleMode> {
        self.test_scales
            .iter()
            .map(|&s| ScaleMode::Fixed { s })
            .chain(self.test_sets.iter().copied())
            .collect()
    }

    pub fn seeds(&self, schedule: &TrainSchedule) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![schedule.seed])
    }

    /// `train_spec` column of the metrics file.
    pub fn train_label(&self) -> String {
        let base = mode_label(&self.train);
        match self.n_train {
            Some(n) => format!("{base};n={n}"),
            None => base,
        }
    }
}

/// `fixed(2)` or `loguniform(1,4)`.
pub fn mode_label(mode: &ScaleMode) -> String {
    match *mode {
        ScaleMode::Fixed { s } => format!("fixed({s})"),
        ScaleMode::LogUniform { s_min, s_max } => format!("loguniform({s_min},{s_max})"),
    }
}

/// `test_scale` column: the scale itself for fixed sets.
pub fn test_label(mode: &ScaleMode) -> String {
    match *mode {
        ScaleMode::Fixed { s } => format!("{s}"),
        _ => mode_label(mode),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { batch_size: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default)]
    pub profile: Option<Profile>,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub schedule: TrainSchedule,
    #[serde(default)]
    pub eval: EvalConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl HarnessConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: HarnessConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    /// The bundled configuration of a profile; paths resolve against the
    /// workspace root.
    pub fn builtin(profile: Profile) -> Result<Self> {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
        let root = dir.canonicalize().unwrap_or(dir);
        let text = match profile {
            Profile::Desk => DESK_CONFIG,
            Profile::Full => FULL_CONFIG,
        };
        Self::from_toml(text, root)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.schedule.validate()?;
        if self.eval.batch_size == 0 {
            return bad("eval.batch_size must be positive".into());
        }
        if self.data.out_size == 0 {
            return bad("data.out_size must be positive".into());
        }
        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return bad(format!("duplicate model name {}", m.name));
            }
            m.net_spec(self.data.out_size, self.schedule.dropout)?;
        }
        let mut exps = HashSet::new();
        for e in &self.experiments {
            if !exps.insert(e.name.as_str()) {
                return bad(format!("duplicate experiment name {}", e.name));
            }
            for m in &e.models {
                if !names.contains(m.as_str()) {
                    return bad(format!("experiment {} names unknown model {m}", e.name));
                }
            }
            for mode in std::iter::once(&e.train).chain(&e.test_sets) {
                ScaleSpec { mode: *mode, seed: 0 }.validate()?;
            }
            for &s in &e.test_scales {
                ScaleSpec::fixed(s).validate()?;
            }
            if e.test_modes().is_empty() {
                return bad(format!("experiment {} has no test sets", e.name));
            }
            if e.n_train == Some(0) {
                return bad(format!("experiment {}: n_train must be positive", e.name));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.data.cache_dir {
            Some(d) => self.resolve(d),
            None => self.out_dir().join("data"),
        }
    }

    /// IDX files of a source set, with `data.root` applied.
    pub fn source_files(&self, source: MnistSplit) -> Result<(PathBuf, PathBuf)> {
        let files = match source {
            MnistSplit::Train => &self.data.train_source,
            MnistSplit::Test => &self.data.test_source,
        }
        .as_ref()
        .ok_or_else(|| HarnessError::Config(format!("no {source:?} source files configured").to_lowercase()))?;
        let root = match &self.data.root {
            None => None,
            Some(r) => Some(match r.strip_prefix('$') {
                Some(var) => PathBuf::from(
                    std::env::var(var)
                        .map_err(|_| HarnessError::Config(format!("environment variable {var} is not set")))?,
                ),
                None => PathBuf::from(r),
            }),
        };
        let join = |p: &Path| match &root {
            Some(r) => self.resolve(&r.join(p)),
            None => self.resolve(p),
        };
        Ok((join(&files.images), join(&files.labels)))
    }

    pub fn model(&self, name: &str) -> Result<&ModelConfig> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| HarnessError::Config(format!("unknown model {name}")))
    }

    pub fn experiment(&self, name: &str) -> Result<&ExperimentConfig> {
        self.experiments
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {name}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_parse() {
        let desk = HarnessConfig::builtin(Profile::Desk).unwrap();
        assert_eq!(desk.profile, Some(Profile::Desk));
        assert!(desk.source_files(MnistSplit::Test).unwrap().0.exists());
        let full = HarnessConfig::builtin(Profile::Full).unwrap();
        assert_eq!(
            full.schedule,
            TrainSchedule {
                seed: full.schedule.seed,
                ..TrainSchedule::default()
            }
        );
    }

    #[test]
    fn model_specs_follow_schedule_dropout() {
        let m = ModelConfig {
            name: "a".into(),
            arch: Arch::FovAvg,
            grid: Some(ScaleGrid::concat_default()),
            pool_space: PoolSpace::Logits,
        };
        let spec = m.net_spec(112, 0.3).unwrap();
        assert!(spec
            .base_layers
            .iter()
            .any(|l| l.kind == LayerKind::Dropout && l.rate == 0.3));
        assert_eq!(spec.pool_space, PoolSpace::Logits);
        let none = m.net_spec(112, 0.0).unwrap();
        assert!(none.base_layers.iter().all(|l| l.kind != LayerKind::Dropout));
        assert!(ModelConfig { grid: None, ..m }.net_spec(112, 0.1).is_err());
    }

    #[test]
    fn unknown_model_reference_is_rejected() {
        let mut text = DESK_CONFIG.to_string();
        text.push_str("\n[[experiments]]\nname = \"bad\"\nmodels = [\"nope\"]\ntrain = { mode = \"fixed\", s = 1.0 }\ntest_scales = [1.0]\n");
        let err = HarnessConfig::from_toml(&text, ".").unwrap_err();
        assert!(err.to_string().contains("unknown model nope"), "{err}");
    }

    #[test]
    fn labels() {
        assert_eq!(mode_label(&ScaleMode::Fixed { s: 2.0 }), "fixed(2)");
        assert_eq!(test_label(&ScaleMode::Fixed { s: 2.0 }), "2");
        assert_eq!(
            test_label(&ScaleMode::LogUniform { s_min: 1.0, s_max: 4.0 }),
            "loguniform(1,4)"
        );
    }
}
