//! Reference scale-space operators on centered pixel grids.
//!
//! Coordinates: pixel `(i, j)` (row, column) of a `width x height` image has
//! its center at `x = j + 0.5 - width / 2`, `y = i + 0.5 - height / 2`, so the
//! origin sits at the image center for both even and odd sizes. Every
//! resampling operator in the crate uses this convention, which makes
//! rescaling by `s` a scaling around the image center. Reads outside the
//! grid return zero.

mod derivative;
mod equivalence;
mod gaussian;
mod hermite;
mod resample;

pub use derivative::{
    directional_derivative_kernel, gaussian_derivative_1d, gaussian_derivative_kernel, scale_normalized_derivative,
    ScaleParameter,
};
pub use equivalence::{check_filter_vs_image_scaling, ResidualReport};
pub use gaussian::{blur, gaussian_kernel, GaussianMode, Kernel1d, Kernel2d};
pub use hermite::{hermite, hermite_coefficients};
pub use resample::{rescale_image, sample_bicubic, sample_bilinear, Interpolation};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct GridImage<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Real> GridImage<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        GridImage {
            width,
            height,
            pixels: vec![T::zero(); width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<T>) -> crate::Result<Self> {
        if pixels.len() != width * height {
            return Err(crate::Error::InvalidArgument(format!(
                "grid image {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GridImage { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)` at centered pixel coordinates.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut img = Self::zeros(width, height);
        for i in 0..height {
            for j in 0..width {
                let (x, y) = img.center_coords(i, j);
                img.pixels[i * width + j] = T::from_f64_lossy(f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    /// Centered coordinates `(x, y)` of pixel `(row, col)`.
    pub fn center_coords(&self, row: usize, col: usize) -> (f64, f64) {
        (
            col as f64 + 0.5 - self.width as f64 / 2.0,
            row as f64 + 0.5 - self.height as f64 / 2.0,
        )
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.width + col]
    }

    /// Pixel value with zero outside the grid.
    pub fn get_or_zero(&self, row: isize, col: isize) -> T {
        if row < 0 || col < 0 || row >= self.height as isize || col >= self.width as isize {
            T::zero()
        } else {
            self.pixels[row as usize * self.width + col as usize]
        }
    }

    /// Value at the pixel nearest the image center (for odd sizes the
    /// center pixel, for even sizes the one below-right of the center).
    pub fn center_value(&self) -> T {
        self.get(self.height / 2, self.width / 2)
    }

    pub fn max_value(&self) -> T {
        self.pixels.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.pixels.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        GridImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> GridImage<U> {
        GridImage {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    /// `(max |a - b|, rms(a - b))` over all pixels.
    pub fn residual(&self, other: &Self) -> (f64, f64) {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "residual: sizes differ"
        );
        let mut max = 0.0f64;
        let mut sq = 0.0;
        for (a, b) in self.pixels.iter().zip(&other.pixels) {
            let d = (a.to_f64_lossy() - b.to_f64_lossy()).abs();
            max = max.max(d);
            sq += d * d;
        }
        (max, (sq / self.pixels.len() as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_coordinates() {
        let even = GridImage::<f64>::zeros(4, 4);
        assert_eq!(even.center_coords(0, 0), (-1.5, -1.5));
        assert_eq!(even.center_coords(2, 2), (0.5, 0.5));
        let odd = GridImage::<f64>::zeros(3, 5);
        assert_eq!(odd.center_coords(2, 1), (0.0, 0.0));
    }

    #[test]
    fn out_of_grid_reads_zero() {
        let img = GridImage::<f64>::from_fn(3, 3, |_, _| 2.0);
        assert_eq!(img.get_or_zero(-1, 0), 0.0);
        assert_eq!(img.get_or_zero(1, 3), 0.0);
        assert_eq!(img.get_or_zero(1, 1), 2.0);
    }
}
