use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scalechan::dataset::DatasetFile;
use scalechan::nets::ChannelNet;
use scalechan::tensor::{Adam, AdamConfig};
use scalechan::Real;

use crate::error::Result;
use crate::schedule::TrainSchedule;

/// Stream of the dropout generator; shuffles use stream `epoch`.
const DROPOUT_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Training-mode accuracy over the epoch, in percent.
    pub train_accuracy: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss,train_accuracy,wall_s";

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", Self::CSV_HEADER)?;
        for e in &self.epochs {
            writeln!(
                f,
                "{},{:e},{},{},{:.3}",
                e.epoch, e.lr, e.loss, e.train_accuracy, e.wall_s
            )?;
        }
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Trains `net` on `data` with Adam. Each epoch visits the records in a
/// permutation drawn from `(seed, epoch)`; a trailing batch of one record
/// is skipped because batch statistics need two. Identical inputs give
/// bit-identical weights.
pub fn train<T: Real>(
    net: &mut ChannelNet<T>,
    data: &DatasetFile,
    schedule: &TrainSchedule,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    schedule.validate()?;
    let mut adam = Adam::<T>::new(AdamConfig::default());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);
    let mut log = TrainLog::default();
    for epoch in 0..schedule.epochs {
        let start = Instant::now();
        let lr = schedule.lr(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut shuffle = ChaCha8Rng::seed_from_u64(schedule.seed);
        shuffle.set_stream(epoch as u64);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for batch in order.chunks(schedule.batch_size).filter(|b| b.len() >= 2) {
            let (x, labels) = data.batch::<T>(batch);
            net.zero_grad();
            let (loss, out) = net.train_batch(&x, &labels, &mut dropout_rng)?;
            adam.step(&mut net.parameters_mut(), lr)?;
            loss_sum += loss.to_f64_lossy() * batch.len() as f64;
            correct += out.predictions().iter().zip(&labels).filter(|(p, y)| p == y).count();
            seen += batch.len();
        }
        let entry = EpochLog {
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            train_accuracy: 100.0 * correct as f64 / seen.max(1) as f64,
            wall_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}
