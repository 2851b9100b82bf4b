use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use scalechan::dataset::{
    generate_dataset, manifest_path, sha256_file, DatasetFile, MnistSplit, RawMnist, ScaleMode, ScaleSpec, Split,
};

use crate::config::HarnessConfig;
use crate::error::Result;

/// Generated datasets, rendered on first use and kept on disk (with their
/// manifests) under the cache directory.
pub struct DataCache<'a> {
    cfg: &'a HarnessConfig,
    dir: PathBuf,
    raw: HashMap<MnistSplit, RawMnist>,
}

fn tag(mode: &ScaleMode) -> String {
    match *mode {
        ScaleMode::Fixed { s } => format!("fixed{s}"),
        ScaleMode::LogUniform { s_min, s_max } => format!("logu{s_min}-{s_max}"),
    }
}

fn file_stem(split: &Split) -> String {
    split
        .name()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

impl<'a> DataCache<'a> {
    pub fn new(cfg: &'a HarnessConfig) -> Self {
        DataCache {
            cfg,
            dir: cfg.cache_dir(),
            raw: HashMap::new(),
        }
    }

    fn raw(&mut self, source: MnistSplit) -> Result<&RawMnist> {
        if !self.raw.contains_key(&source) {
            let (images, labels) = self.cfg.source_files(source)?;
            let raw = RawMnist::load(&images, &labels, source)?;
            self.raw.insert(source, raw);
        }
        Ok(&self.raw[&source])
    }

    /// Path a dataset is cached at.
    pub fn path_for(&self, split: &Split, spec: &ScaleSpec) -> PathBuf {
        self.dir.join(format!(
            "{}_{}_seed{}_{}px.mnls",
            file_stem(split),
            tag(&spec.mode),
            spec.seed,
            self.cfg.data.out_size
        ))
    }

    /// The dataset for `split` under `spec`, reusing a cached file whose
    /// manifest checksum still matches.
    pub fn get(&mut self, split: &Split, spec: &ScaleSpec) -> Result<DatasetFile> {
        let path = self.path_for(split, spec);
        if let Some(file) = self.try_cached(&path) {
            return Ok(file);
        }
        fs::create_dir_all(&self.dir)?;
        let size = self.cfg.data.out_size;
        let raw = self.raw(split.source())?;
        log::info!("generating {} ({})", path.display(), split.name());
        let (file, _) = generate_dataset(raw, spec, split, size, &path)?;
        Ok(file)
    }

    fn try_cached(&self, path: &std::path::Path) -> Option<DatasetFile> {
        let manifest = fs::read_to_string(manifest_path(path)).ok()?;
        let expected = manifest
            .lines()
            .find_map(|l| l.strip_prefix("sha256 = \"")?.strip_suffix('"').map(str::to_owned))?;
        if sha256_file(path).ok()? != expected {
            log::warn!("{} does not match its manifest; regenerating", path.display());
            return None;
        }
        DatasetFile::load(path).ok()
    }

    /// Training records drawn with the configured training seed, truncated
    /// to the first `n` when given.
    pub fn train_set(&mut self, mode: ScaleMode, n: Option<usize>) -> Result<DatasetFile> {
        let spec = ScaleSpec {
            mode,
            seed: self.cfg.data.train_seed,
        };
        let split = self.cfg.data.train;
        let file = self.get(&split, &spec)?;
        Ok(match n {
            Some(n) if n < file.len() => file.select(&(0..n).collect::<Vec<_>>()),
            Some(n) if n > file.len() => {
                return Err(crate::error::HarnessError::Config(format!(
                    "n_train = {n} exceeds the {} training records",
                    file.len()
                )))
            }
            _ => file,
        })
    }

    /// Test records drawn with the shared test seed.
    pub fn test_set(&mut self, mode: ScaleMode) -> Result<DatasetFile> {
        let spec = ScaleSpec {
            mode,
            seed: self.cfg.data.test_seed,
        };
        let split = self.cfg.data.test;
        self.get(&split, &spec)
    }
}
