//! MNIST Large Scale: digits rendered at controlled scale factors.
//!
//! Each record is a source digit resampled by its scale factor into an
//! `out_size x out_size` frame (112 by default), smoothed with
//! `σ = 7 s / 8`, range-normalised to `[0, 255]` and passed through
//! `(2 / π) atan(0.02 (I - 128))`. Per-image scales come from a
//! counter-based generator, so any subset is reproducible on its own.

mod file;
mod idx;
mod pipeline;
mod spec;

pub use file::{manifest_path, sha256_file, DatasetFile, HEADER_LEN};
pub use idx::{parse_idx, read_idx_images, read_idx_labels, MnistSplit, RawMnist, IMAGES_MAGIC, LABELS_MAGIC};
pub use pipeline::{make_scaled_image, make_scaled_image_linear, sharpen, smoothing_sigma, DEFAULT_OUT_SIZE};
pub use spec::{ScaleMode, ScaleSpec, Split, MAX_SCALE, MIN_SCALE, MNIST_TEST_TOTAL, MNIST_TRAIN_TOTAL, TRAIN_COUNT};

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Renders the records of `split` in memory.
pub fn generate_records(raw: &RawMnist, spec: &ScaleSpec, split: &Split, out_size: usize) -> Result<DatasetFile> {
    spec.validate()?;
    if raw.split != split.source() {
        return Err(Error::InvalidArgument(format!(
            "split {} needs the {:?} source, got {:?}",
            split.name(),
            split.source(),
            raw.split
        )));
    }
    let range = split.indices(raw.len())?;
    let rendered: Vec<(f32, Vec<f32>)> = range
        .clone()
        .into_par_iter()
        .map(|i| {
            let s = spec.scale_for(raw.split, i);
            let img = make_scaled_image(raw.image(i), s, out_size);
            (s as f32, img.pixels().iter().map(|&v| v as f32).collect())
        })
        .collect();
    let mut scales = Vec::with_capacity(rendered.len());
    let mut pixels = Vec::with_capacity(rendered.len() * out_size * out_size);
    for (s, px) in rendered {
        scales.push(s);
        pixels.extend(px);
    }
    Ok(DatasetFile {
        size: out_size,
        spec: *spec,
        labels: raw.labels[range].to_vec(),
        scales,
        pixels,
    })
}

/// Renders `split` and writes it with its manifest; returns the file and
/// its SHA-256.
pub fn generate_dataset(
    raw: &RawMnist,
    spec: &ScaleSpec,
    split: &Split,
    out_size: usize,
    out_path: impl AsRef<Path>,
) -> Result<(DatasetFile, String)> {
    let file = generate_records(raw, spec, split, out_size)?;
    let digest = file.save(out_path, split)?;
    Ok((file, digest))
}
