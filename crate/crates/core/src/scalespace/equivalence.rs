use super::gaussian::{blur, GaussianMode};
use super::resample::{rescale_image, Interpolation};
use super::GridImage;
use crate::scalar::Real;

/// Outcome of comparing filter rescaling against image rescaling.
#[derive(Clone, Debug)]
pub struct ResidualReport<T> {
    pub s: f64,
    pub sigma_h: f64,
    /// `f * h_s`, with `h_s(x) = s^{-2} h(x / s)`.
    pub side_l: GridImage<T>,
    /// `(f_{1/s} * h)` read back at `x / s`, with `f_{1/s}(x) = f(s x)`.
    pub side_m: GridImage<T>,
    pub max_abs: f64,
    pub rms: f64,
    /// Peak magnitude of `side_l`, for relative tolerances.
    pub peak: f64,
}

impl<T: Real> ResidualReport<T> {
    pub const CSV_HEADER: &'static str = "s,sigma_h,width,height,max_abs,rms,peak,max_rel";

    pub fn max_rel(&self) -> f64 {
        if self.peak > 0.0 {
            self.max_abs / self.peak
        } else {
            self.max_abs
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{:e}",
            self.s,
            self.sigma_h,
            self.side_l.width(),
            self.side_l.height(),
            self.max_abs,
            self.rms,
            self.peak,
            self.max_rel()
        )
    }
}

/// Checks that filtering `f` with a Gaussian rescaled by `s` agrees with
/// filtering the image rescaled by `1/s` with the unscaled Gaussian and
/// mapping the result back, i.e. `L_h(x; s) = M_h(x / s; 1 / s)`.
///
/// The intermediate image is given a frame large enough to hold the whole
/// rescaled support; resampling is bicubic throughout.
pub fn check_filter_vs_image_scaling<T: Real>(f: &GridImage<T>, sigma_h: f64, s: f64) -> ResidualReport<T> {
    assert!(
        sigma_h > 0.0 && s > 0.0,
        "check_filter_vs_image_scaling: sigma_h and s must be positive"
    );
    let (w, h) = (f.width(), f.height());
    let side_l = blur(f, s * sigma_h, GaussianMode::Sampled);

    let grow = |n: usize| ((n as f64 / s).ceil() as usize).max(n);
    let mid = (grow(w), grow(h));
    let f_shrunk = if s == 1.0 {
        f.clone()
    } else {
        rescale_image(f, 1.0 / s, Interpolation::Bicubic, mid)
    };
    let filtered = blur(&f_shrunk, sigma_h, GaussianMode::Sampled);
    let side_m = if s == 1.0 {
        filtered
    } else {
        rescale_image(&filtered, s, Interpolation::Bicubic, (w, h))
    };

    let (max_abs, rms) = side_l.residual(&side_m);
    let peak = side_l
        .pixels()
        .iter()
        .map(|v| v.to_f64_lossy().abs())
        .fold(0.0, f64::max);
    ResidualReport {
        s,
        sigma_h,
        side_l,
        side_m,
        max_abs,
        rms,
        peak,
    }
}
