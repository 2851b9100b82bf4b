use std::path::PathBuf;
use std::time::Instant;

use scalechan::nets::ChannelNet;
use scalechan::Real;

use crate::config::{ExperimentConfig, HarnessConfig};
use crate::data::DataCache;
use crate::error::{HarnessError, Result};
use crate::eval::evaluate_across_scales;
use crate::metrics::{append_metrics, MetricsRow};
use crate::schedule::{Precision, TrainSchedule};
use crate::train::{train, TrainLog};

pub fn checkpoint_path(cfg: &HarnessConfig, experiment: &str, model: &str, seed: u64) -> PathBuf {
    cfg.out_dir()
        .join("checkpoints")
        .join(format!("{experiment}__{model}__seed{seed}.ckpt"))
}

pub fn train_log_path(cfg: &HarnessConfig, experiment: &str, model: &str, seed: u64) -> PathBuf {
    cfg.out_dir()
        .join("logs")
        .join(format!("{experiment}__{model}__seed{seed}.csv"))
}

pub fn metrics_path(cfg: &HarnessConfig) -> PathBuf {
    cfg.out_dir().join("metrics.csv")
}

/// Freshly initialised network for `model`; weights drawn from `seed`.
pub fn build_net<T: Real>(cfg: &HarnessConfig, model: &str, seed: u64) -> Result<ChannelNet<T>> {
    let spec = cfg.model(model)?.net_spec(cfg.data.out_size, cfg.schedule.dropout)?;
    Ok(ChannelNet::with_seed(spec, seed)?)
}

/// Trains one `(experiment, model, seed)` run and writes its checkpoint and
/// per-epoch log.
pub fn train_run<T: Real>(
    cfg: &HarnessConfig,
    cache: &mut DataCache,
    exp: &ExperimentConfig,
    model: &str,
    seed: u64,
) -> Result<(ChannelNet<T>, TrainLog)> {
    let data = cache.train_set(exp.train, exp.n_train)?;
    let mut net = build_net::<T>(cfg, model, seed)?;
    let schedule = TrainSchedule { seed, ..cfg.schedule };
    log::info!(
        "train {}/{model} seed {seed}: {} records, {} parameters",
        exp.name,
        data.len(),
        net.num_parameters()
    );
    let log = train(&mut net, &data, &schedule, |e| {
        log::info!(
            "  epoch {} lr {:.2e} loss {:.4} train acc {:.2}% ({:.1}s)",
            e.epoch,
            e.lr,
            e.loss,
            e.train_accuracy,
            e.wall_s
        )
    })?;
    let ckpt = checkpoint_path(cfg, &exp.name, model, seed);
    let log_path = train_log_path(cfg, &exp.name, model, seed);
    for p in [&ckpt, &log_path] {
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d)?;
        }
    }
    net.save(&ckpt)?;
    log.write_csv(&log_path)?;
    Ok((net, log))
}

/// Loads the checkpoint of a finished run.
pub fn load_run<T: Real>(
    cfg: &HarnessConfig,
    exp: &ExperimentConfig,
    model: &str,
    seed: u64,
    checkpoint: Option<PathBuf>,
) -> Result<ChannelNet<T>> {
    let path = checkpoint.unwrap_or_else(|| checkpoint_path(cfg, &exp.name, model, seed));
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint(path));
    }
    let mut net = build_net::<T>(cfg, model, seed)?;
    net.load(&path)?;
    Ok(net)
}

/// Evaluates a trained network on the experiment's test sets. `wall_s` of
/// each row is `extra_wall_s` (usually the training time) plus the time
/// spent on that test set.
pub fn eval_run<T: Real>(
    cfg: &HarnessConfig,
    cache: &mut DataCache,
    exp: &ExperimentConfig,
    model: &str,
    seed: u64,
    net: &mut ChannelNet<T>,
    extra_wall_s: f64,
) -> Result<Vec<MetricsRow>> {
    let results = evaluate_across_scales(net, cache, &exp.test_modes(), cfg.eval.batch_size)?;
    Ok(results
        .into_iter()
        .map(|r| MetricsRow {
            model: model.to_string(),
            train_spec: exp.train_label(),
            test_scale: r.label,
            accuracy: r.accuracy,
            n_test: r.n_test,
            seed,
            wall_s: extra_wall_s + r.wall_s,
        })
        .collect())
}

/// Trains and evaluates every `(seed, model)` of one experiment, appending
/// to the metrics file as runs finish.
pub fn run_experiment<T: Real>(
    cfg: &HarnessConfig,
    cache: &mut DataCache,
    exp: &ExperimentConfig,
) -> Result<Vec<MetricsRow>> {
    let mut all = Vec::new();
    for seed in exp.seeds(&cfg.schedule) {
        for model in &exp.models {
            let start = Instant::now();
            let (mut net, _) = train_run::<T>(cfg, cache, exp, model, seed)?;
            let rows = eval_run(cfg, cache, exp, model, seed, &mut net, start.elapsed().as_secs_f64())?;
            for r in &rows {
                log::info!("  {} {} @ {}: {:.2}%", r.model, r.train_spec, r.test_scale, r.accuracy);
            }
            append_metrics(metrics_path(cfg), &rows)?;
            all.extend(rows);
        }
    }
    Ok(all)
}

/// Runs the declared experiment matrix (or one experiment of it).
pub fn run_sweep(cfg: &HarnessConfig, only: Option<&str>) -> Result<Vec<MetricsRow>> {
    let exps: Vec<&ExperimentConfig> = match only {
        Some(name) => vec![cfg.experiment(name)?],
        None => cfg.experiments.iter().collect(),
    };
    let mut cache = DataCache::new(cfg);
    let mut rows = Vec::new();
    for exp in exps {
        rows.extend(match cfg.schedule.precision {
            Precision::F32 => run_experiment::<f32>(cfg, &mut cache, exp)?,
            Precision::F64 => run_experiment::<f64>(cfg, &mut cache, exp)?,
        });
    }
    Ok(rows)
}
