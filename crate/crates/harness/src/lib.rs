//! Experiment harness for scale-channel networks: TOML configuration,
//! dataset caching, the training schedule, cross-scale evaluation, metrics
//! CSV files, sweeps and the verification suite behind the `scalechan`
//! binary.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod run;
pub mod schedule;
pub mod train;
pub mod verify;

pub use config::{Arch, ExperimentConfig, HarnessConfig, ModelConfig, Profile};
pub use error::{HarnessError, Result};
pub use metrics::MetricsRow;
pub use schedule::{Precision, TrainSchedule};
