//! Append-only metrics CSV:
//! `model,train_spec,test_scale,accuracy,n_test,seed,wall_s`, preceded by a
//! `# scalechan-metrics v1` schema line.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const METRICS_SCHEMA: &str = "# scalechan-metrics v1";
pub const METRICS_HEADER: &str = "model,train_spec,test_scale,accuracy,n_test,seed,wall_s";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub train_spec: String,
    pub test_scale: String,
    /// Percent.
    pub accuracy: f64,
    pub n_test: usize,
    pub seed: u64,
    pub wall_s: f64,
}

impl MetricsRow {
    /// The test scale as a number, for fixed-scale test sets.
    pub fn scale(&self) -> Option<f64> {
        self.test_scale.parse().ok()
    }
}

/// Appends rows, writing the schema line and header if the file is new.
pub fn append_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{METRICS_SCHEMA}")?;
        writeln!(file, "{METRICS_HEADER}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let mut first = String::new();
    BufReader::new(std::fs::File::open(path)?).read_line(&mut first)?;
    if first.trim_end() != METRICS_SCHEMA {
        return Err(HarnessError::Config(format!(
            "{}: expected schema line {METRICS_SCHEMA:?}, found {:?}",
            path.display(),
            first.trim_end()
        )));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(HarnessError::Config(format!(
            "{}: unexpected header {header}",
            path.display()
        )));
    }
    Ok(r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

/// Seed-averaged accuracy of one `(model, train_spec)` at a fixed scale.
pub fn mean_accuracy_at(rows: &[MetricsRow], model: &str, train_spec: &str, scale: f64) -> Option<f64> {
    mean_where(rows, |r| {
        r.model == model && r.train_spec == train_spec && r.scale().is_some_and(|s| (s - scale).abs() < 1e-9)
    })
}

/// Seed-averaged accuracy of one `(model, train_spec, test_scale)` label.
pub fn mean_accuracy(rows: &[MetricsRow], model: &str, train_spec: &str, test_scale: &str) -> Option<f64> {
    mean_where(rows, |r| {
        r.model == model && r.train_spec == train_spec && r.test_scale == test_scale
    })
}

fn mean_where(rows: &[MetricsRow], keep: impl Fn(&MetricsRow) -> bool) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| keep(r)).map(|r| r.accuracy).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
