use scalechan::dataset::{DatasetFile, ScaleMode};
use scalechan::nets::ChannelNet;
use scalechan::Real;

use crate::config::test_label;
use crate::data::DataCache;
use crate::error::Result;

/// `2^{k/4}` for `k = -4..=12`: the 17 test scales from 1/2 to 8.
pub fn default_eval_scales() -> Vec<f64> {
    (-4..=12).map(|k| 2f64.powf(k as f64 / 4.0)).collect()
}

/// Number of correctly classified records, in inference mode.
pub fn count_correct<T: Real>(net: &mut ChannelNet<T>, data: &DatasetFile, batch_size: usize) -> Result<usize> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch::<T>(chunk);
        let pred = net.predict(&x)?.predictions();
        correct += pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
    }
    Ok(correct)
}

/// Accuracy in percent.
pub fn accuracy<T: Real>(net: &mut ChannelNet<T>, data: &DatasetFile, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * count_correct(net, data, batch_size)? as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleAccuracy {
    /// `test_scale` label (the scale for fixed sets).
    pub label: String,
    pub accuracy: f64,
    pub n_test: usize,
    pub wall_s: f64,
}

/// Accuracy on each test distribution, generating the test sets with the
/// shared test seed as needed.
pub fn evaluate_across_scales<T: Real>(
    net: &mut ChannelNet<T>,
    cache: &mut DataCache,
    tests: &[ScaleMode],
    batch_size: usize,
) -> Result<Vec<ScaleAccuracy>> {
    tests
        .iter()
        .map(|mode| {
            let data = cache.test_set(*mode)?;
            let start = std::time::Instant::now();
            let acc = accuracy(net, &data, batch_size)?;
            Ok(ScaleAccuracy {
                label: test_label(mode),
                accuracy: acc,
                n_test: data.len(),
                wall_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
