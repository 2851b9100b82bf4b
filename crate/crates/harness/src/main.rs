use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scalechan::dataset::{sha256_file, ScaleMode};
use scalechan_harness::data::DataCache;
use scalechan_harness::error::{HarnessError, Result};
use scalechan_harness::metrics::append_metrics;
use scalechan_harness::run::{eval_run, load_run, metrics_path, run_sweep, train_run};
use scalechan_harness::verify::{run_verify, VerifyOptions};
use scalechan_harness::{HarnessConfig, Precision, Profile};

#[derive(Parser)]
#[command(name = "scalechan", version, about = "Scale-channel network experiments")]
struct Cli {
    /// Experiment config (TOML). Defaults to the bundled profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled profile used when no config is given.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    /// Overrides the schedule seed and runs a single seed per experiment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["32", "64"])]
    precision: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Render datasets and their manifests. Without scale flags, renders
    /// every set the configured experiments use.
    GenData {
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Fixed scale factor.
        #[arg(long, conflicts_with_all = ["s_min", "s_max"])]
        scale: Option<f64>,
        /// Log-uniform range, lower end.
        #[arg(long, requires = "s_max")]
        s_min: Option<f64>,
        #[arg(long, requires = "s_min")]
        s_max: Option<f64>,
        /// Restrict to one experiment's sets.
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Train one model of an experiment; writes a checkpoint and a log.
    Train {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        model: String,
    },
    /// Evaluate a trained model on the experiment's test sets.
    Eval {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the property suites; non-zero exit if any check fails.
    Verify {
        /// Fewer seeds and probe digits.
        #[arg(long)]
        quick: bool,
    },
    /// Train and evaluate the experiment matrix.
    Sweep {
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Print the resolved training schedule.
    Schedule,
}

fn load_config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::builtin(cli.profile)?,
    };
    if let Some(seed) = cli.seed {
        cfg.schedule.seed = seed;
        for e in &mut cfg.experiments {
            e.seeds = Some(vec![seed]);
        }
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = std::path::absolute(dir)?;
    }
    if let Some(p) = &cli.precision {
        cfg.schedule.precision = if p == "64" { Precision::F64 } else { Precision::F32 };
    }
    Ok(cfg)
}

fn gen_data(cfg: &HarnessConfig, split: SplitArg, mode: Option<ScaleMode>, experiment: Option<&str>) -> Result<()> {
    let mut cache = DataCache::new(cfg);
    let mut jobs: Vec<(SplitArg, ScaleMode)> = Vec::new();
    match mode {
        Some(m) => jobs.push((split, m)),
        None => {
            let exps: Vec<_> = match experiment {
                Some(n) => vec![cfg.experiment(n)?],
                None => cfg.experiments.iter().collect(),
            };
            for e in exps {
                jobs.push((SplitArg::Train, e.train));
                jobs.extend(e.test_modes().into_iter().map(|m| (SplitArg::Test, m)));
            }
        }
    }
    for (split, mode) in jobs {
        let (path, len) = match split {
            SplitArg::Train => {
                let spec = scalechan::dataset::ScaleSpec {
                    mode,
                    seed: cfg.data.train_seed,
                };
                let f = cache.get(&cfg.data.train, &spec)?;
                (cache.path_for(&cfg.data.train, &spec), f.len())
            }
            SplitArg::Test => {
                let spec = scalechan::dataset::ScaleSpec {
                    mode,
                    seed: cfg.data.test_seed,
                };
                let f = cache.get(&cfg.data.test, &spec)?;
                (cache.path_for(&cfg.data.test, &spec), f.len())
            }
        };
        println!("{}  {} records  sha256={}", path.display(), len, sha256_file(&path)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::GenData {
            split,
            scale,
            s_min,
            s_max,
            experiment,
        } => {
            let mode = match (scale, s_min, s_max) {
                (Some(s), _, _) => Some(ScaleMode::Fixed { s }),
                (None, Some(s_min), Some(s_max)) => Some(ScaleMode::LogUniform { s_min, s_max }),
                _ => None,
            };
            gen_data(&cfg, split, mode, experiment.as_deref())
        }
        Command::Train { experiment, model } => {
            let exp = cfg.experiment(&experiment)?.clone();
            let seed = cfg.schedule.seed;
            let mut cache = DataCache::new(&cfg);
            let log = match cfg.schedule.precision {
                Precision::F32 => train_run::<f32>(&cfg, &mut cache, &exp, &model, seed)?.1,
                Precision::F64 => train_run::<f64>(&cfg, &mut cache, &exp, &model, seed)?.1,
            };
            println!("{}", scalechan_harness::train::TrainLog::CSV_HEADER);
            for e in &log.epochs {
                println!("{},{:e},{},{},{:.3}", e.epoch, e.lr, e.loss, e.train_accuracy, e.wall_s);
            }
            println!(
                "checkpoint: {}",
                scalechan_harness::run::checkpoint_path(&cfg, &experiment, &model, seed).display()
            );
            Ok(())
        }
        Command::Eval {
            experiment,
            model,
            checkpoint,
        } => {
            let exp = cfg.experiment(&experiment)?.clone();
            let seed = cfg.schedule.seed;
            let mut cache = DataCache::new(&cfg);
            let rows = match cfg.schedule.precision {
                Precision::F32 => {
                    let mut net = load_run::<f32>(&cfg, &exp, &model, seed, checkpoint)?;
                    eval_run(&cfg, &mut cache, &exp, &model, seed, &mut net, 0.0)?
                }
                Precision::F64 => {
                    let mut net = load_run::<f64>(&cfg, &exp, &model, seed, checkpoint)?;
                    eval_run(&cfg, &mut cache, &exp, &model, seed, &mut net, 0.0)?
                }
            };
            append_metrics(metrics_path(&cfg), &rows)?;
            println!("{}", scalechan_harness::metrics::METRICS_HEADER);
            for r in rows {
                println!(
                    "{},{},{},{:.2},{},{},{:.2}",
                    r.model, r.train_spec, r.test_scale, r.accuracy, r.n_test, r.seed, r.wall_s
                );
            }
            Ok(())
        }
        Command::Verify { quick } => {
            let out = cfg.out_dir().join("verify");
            let report = run_verify(
                &cfg,
                &VerifyOptions {
                    quick,
                    out_dir: out.clone(),
                },
            )?;
            print!("{}", report.render());
            println!("report: {}", out.join("report.txt").display());
            let failed = report.failed();
            if failed > 0 {
                return Err(HarnessError::VerifyFailed {
                    failed,
                    total: report.checks.len(),
                });
            }
            Ok(())
        }
        Command::Sweep { experiment } => {
            let rows = run_sweep(&cfg, experiment.as_deref())?;
            println!("{}", scalechan_harness::metrics::METRICS_HEADER);
            for r in rows {
                println!(
                    "{},{},{},{:.2},{},{},{:.2}",
                    r.model, r.train_spec, r.test_scale, r.accuracy, r.n_test, r.seed, r.wall_s
                );
            }
            println!("metrics: {}", metrics_path(&cfg).display());
            Ok(())
        }
        Command::Schedule => {
            print!("{}", cfg.schedule.describe());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
