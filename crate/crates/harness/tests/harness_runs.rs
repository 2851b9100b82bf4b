use std::path::Path;
use std::process::Command;

use scalechan::dataset::ScaleMode;
use scalechan_harness::data::DataCache;
use scalechan_harness::eval::accuracy;
use scalechan_harness::metrics::{append_metrics, read_metrics, METRICS_HEADER, METRICS_SCHEMA};
use scalechan_harness::run::{build_net, load_run, train_run};
use scalechan_harness::train::train;
use scalechan_harness::{HarnessConfig, HarnessError, MetricsRow, Profile};

/// Few digits and epochs so each test trains in seconds.
fn small_config(base: &Path, train_end: usize, epochs: usize) -> HarnessConfig {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk-mnist");
    let text = format!(
        r#"
out_dir = "out"

[data]
out_size = 112
test_source = {{ images = "{0}/images-idx3-ubyte.gz", labels = "{0}/labels-idx1-ubyte.gz" }}
train = {{ split = "range", source = "test", start = 0, end = {train_end} }}
test = {{ split = "range", source = "test", start = 9000, end = 9200 }}
train_seed = 1
test_seed = 2

[schedule]
epochs = {epochs}
lr_start = 3e-3
lr_min = 5e-5
decay = 0.6065306597126334
dropout = 0.0
batch_size = 16
seed = 0
precision = 32

[[models]]
name = "cnn"
arch = "cnn"

[[models]]
name = "fov_avg"
arch = "fov_avg"
grid = {{ gamma = 2.0, min_exponent = -1, max_exponent = 1 }}

[[experiments]]
name = "tr2"
models = ["cnn", "fov_avg"]
train = {{ mode = "fixed", s = 2.0 }}
test_scales = [2.0]
"#,
        data.display()
    );
    HarnessConfig::from_toml(&text, base.to_path_buf()).unwrap()
}

#[test]
fn bundled_profiles_parse_and_survive_a_toml_round_trip() {
    for profile in [Profile::Desk, Profile::Full] {
        let cfg = HarnessConfig::builtin(profile).unwrap();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = HarnessConfig::from_toml(&text, cfg.base_dir.clone()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn metrics_append_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    let row = |model: &str, acc: f64| MetricsRow {
        model: model.into(),
        train_spec: "loguniform(1,4);n=500".into(),
        test_scale: "2".into(),
        accuracy: acc,
        n_test: 1000,
        seed: 3,
        wall_s: 1.5,
    };
    append_metrics(&path, &[row("cnn", 91.25)]).unwrap();
    append_metrics(&path, &[row("fov_avg", 97.5)]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], METRICS_SCHEMA);
    assert_eq!(lines[1], METRICS_HEADER);
    assert_eq!(lines.len(), 4);
    assert_eq!(
        read_metrics(&path).unwrap(),
        vec![row("cnn", 91.25), row("fov_avg", 97.5)]
    );
}

#[test]
fn metrics_without_schema_line_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    std::fs::write(&path, format!("{METRICS_HEADER}\ncnn,fixed(2),2,90,10,0,1\n")).unwrap();
    assert!(read_metrics(&path).is_err());
}

#[test]
fn training_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 48, 1);
    let mut cache = DataCache::new(&cfg);
    let data = cache.train_set(ScaleMode::Fixed { s: 2.0 }, None).unwrap();
    let run = || {
        let mut net = build_net::<f32>(&cfg, "fov_avg", 4).unwrap();
        let log = train(&mut net, &data, &cfg.schedule, |_| {}).unwrap();
        let path = dir.path().join(format!("w{}.ckpt", run_index()));
        net.save(&path).unwrap();
        (std::fs::read(&path).unwrap(), log.final_loss().unwrap())
    };
    let (a, loss_a) = run();
    let (b, loss_b) = run();
    assert_eq!(loss_a.to_bits(), loss_b.to_bits());
    assert!(a == b, "checkpoints differ");
}

fn run_index() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static N: AtomicU64 = AtomicU64::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

#[test]
fn accuracy_does_not_depend_on_eval_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 48, 1);
    let mut cache = DataCache::new(&cfg);
    let test = cache.test_set(ScaleMode::Fixed { s: 2.0 }).unwrap();
    for model in ["cnn", "fov_avg"] {
        let mut net = build_net::<f32>(&cfg, model, 1).unwrap();
        let a = accuracy(&mut net, &test, 7).unwrap();
        let b = accuracy(&mut net, &test, 200).unwrap();
        assert_eq!(a, b, "{model}");
    }
}

#[test]
fn untrained_networks_are_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 48, 1);
    let mut cache = DataCache::new(&cfg);
    let test = cache.test_set(ScaleMode::Fixed { s: 2.0 }).unwrap();
    for model in ["cnn", "fov_avg"] {
        let mut net = build_net::<f32>(&cfg, model, 5).unwrap();
        let acc = accuracy(&mut net, &test, 100).unwrap();
        // 200 digits: one always-predicted class lands near 10%.
        assert!(acc < 30.0, "{model}: {acc}");
    }
}

#[test]
fn a_few_digits_are_memorised() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 32, 25);
    let mut cache = DataCache::new(&cfg);
    let data = cache.train_set(ScaleMode::Fixed { s: 2.0 }, None).unwrap();
    let mut net = build_net::<f32>(&cfg, "cnn", 0).unwrap();
    let log = train(&mut net, &data, &cfg.schedule, |_| {}).unwrap();
    let first = log.epochs.first().unwrap().loss;
    let last = log.final_loss().unwrap();
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    assert!(accuracy(&mut net, &data, 32).unwrap() >= 90.0);
}

#[test]
fn train_run_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 32, 1);
    let exp = cfg.experiment("tr2").unwrap().clone();
    let err = load_run::<f32>(&cfg, &exp, "cnn", 0, None).unwrap_err();
    assert!(matches!(err, HarnessError::MissingCheckpoint(_)));
    assert_eq!(err.kind(), "missing_checkpoint");

    let mut cache = DataCache::new(&cfg);
    let (mut trained, _) = train_run::<f32>(&cfg, &mut cache, &exp, "cnn", 0).unwrap();
    let mut loaded = load_run::<f32>(&cfg, &exp, "cnn", 0, None).unwrap();
    let test = cache.test_set(ScaleMode::Fixed { s: 2.0 }).unwrap();
    assert_eq!(
        accuracy(&mut trained, &test, 50).unwrap(),
        accuracy(&mut loaded, &test, 50).unwrap()
    );
}

#[test]
fn cli_reports_errors_with_a_kind() {
    let out = Command::new(env!("CARGO_BIN_EXE_scalechan"))
        .args(["train", "--experiment", "nope", "--model", "cnn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error kind=config"), "{stderr}");
}
