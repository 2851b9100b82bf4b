//! Rendering one scaled digit: bicubic resampling, clipping, embedding,
//! scale-dependent smoothing, range normalisation and arctan sharpening.

use crate::scalespace::{blur, rescale_image, GaussianMode, GridImage, Interpolation};

pub const DEFAULT_OUT_SIZE: usize = 112;
pub const SHARPEN_GAIN: f64 = 0.02;
pub const SHARPEN_CENTER: f64 = 128.0;

/// Smoothing applied after resampling by `s`: `σ = 7 s / 8`.
pub fn smoothing_sigma(s: f64) -> f64 {
    7.0 * s / 8.0
}

/// `(2 / π) atan(a (v - b))` with `a = 0.02`, `b = 128`.
pub fn sharpen(v: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * (SHARPEN_GAIN * (v - SHARPEN_CENTER)).atan()
}

fn digit_image(digit: &[u8], side: usize) -> GridImage<f64> {
    assert_eq!(digit.len(), side * side, "digit must be square");
    GridImage::from_pixels(side, side, digit.iter().map(|&p| p as f64).collect()).expect("sized")
}

/// Steps up to and including the `[0, 255]` range rescale, before
/// sharpening. The output frame is `out_size x out_size`, centered on the
/// digit.
pub fn make_scaled_image_linear(digit: &[u8], s: f64, out_size: usize) -> GridImage<f64> {
    let side = (digit.len() as f64).sqrt() as usize;
    let src = digit_image(digit, side);
    // Resampling straight into the output frame does the embedding too.
    let resampled = rescale_image(&src, s, Interpolation::Bicubic, (out_size, out_size));
    let clipped = resampled.map(|v| v.clamp(0.0, 256.0));
    let smooth = blur(&clipped, smoothing_sigma(s), GaussianMode::Sampled);
    let (lo, hi) = (smooth.min_value(), smooth.max_value());
    if hi > lo {
        smooth.map(|v| 255.0 * (v - lo) / (hi - lo))
    } else {
        smooth.map(|_| 0.0)
    }
}

/// The full rendering pipeline; values lie in `(-1, 1)`.
pub fn make_scaled_image(digit: &[u8], s: f64, out_size: usize) -> GridImage<f64> {
    make_scaled_image_linear(digit, s, out_size).map(sharpen)
}
