use super::gaussian::{convolve_separable, gaussian_kernel, GaussianMode, Kernel1d, Kernel2d};
use super::hermite::hermite;
use super::GridImage;
use crate::scalar::Real;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleParameter {
    pub sigma: f64,
    pub gamma_norm: f64,
}

impl ScaleParameter {
    pub fn new(sigma: f64, gamma_norm: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        if !(0.0..=1.0).contains(&gamma_norm) {
            return Err(Error::InvalidArgument(format!(
                "gamma_norm must lie in [0, 1], got {gamma_norm}"
            )));
        }
        Ok(ScaleParameter { sigma, gamma_norm })
    }

    /// `σ^{order · γ}`.
    pub fn normalization(&self, order: usize) -> f64 {
        self.sigma.powf(order as f64 * self.gamma_norm)
    }
}

/// 1-D Gaussian derivative of the given order in Hermite form,
/// `(-1)^n σ^{-n} He_n(u / σ) g(u)`, over the sampled zero-order kernel `g`.
///
/// Even orders >= 2 have their (truncation-induced) DC component removed by
/// subtracting a multiple of `g`; odd orders are antisymmetric and sum to
/// zero already.
pub fn gaussian_derivative_1d<T: Real>(order: usize, sigma: f64) -> Kernel1d<T> {
    let g0 = gaussian_kernel::<f64>(sigma, GaussianMode::Sampled);
    if order == 0 {
        return gaussian_kernel(sigma, GaussianMode::Sampled);
    }
    let r = g0.radius() as isize;
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = sign * sigma.powi(-(order as i32));
    let mut raw: Vec<f64> = (-r..=r)
        .map(|u| scale * hermite(order, u as f64 / sigma) * g0.at(u))
        .collect();
    if order.is_multiple_of(2) {
        let dc: f64 = raw.iter().sum();
        for (v, &g) in raw.iter_mut().zip(g0.weights()) {
            *v -= dc * g;
        }
    }
    Kernel1d::from_weights(g0.radius(), raw.into_iter().map(T::from_f64_lossy).collect())
}

/// Separable kernel for `∂_x^{αx} ∂_y^{αy}` of the Gaussian.
pub fn gaussian_derivative_kernel<T: Real>(alpha: (usize, usize), sigma: f64) -> Kernel2d<T> {
    Kernel2d::outer(
        &gaussian_derivative_1d(alpha.0, sigma),
        &gaussian_derivative_1d(alpha.1, sigma),
    )
}

/// `σ^{|α| γ} (∂^α g_σ * f)`, computed separably.
pub fn scale_normalized_derivative<T: Real>(
    image: &GridImage<T>,
    alpha: (usize, usize),
    scale: ScaleParameter,
) -> GridImage<T> {
    let kx = gaussian_derivative_1d::<T>(alpha.0, scale.sigma);
    let ky = gaussian_derivative_1d::<T>(alpha.1, scale.sigma);
    let factor = T::from_f64_lossy(scale.normalization(alpha.0 + alpha.1));
    convolve_separable(image, &kx, &ky).map(|v| v * factor)
}

/// Non-separable kernel of the `n`-th derivative along the unit direction
/// `e = (ex, ey)`, evaluated directly in rotated coordinates as
/// `(-1)^n σ^{-n} He_n((e · x) / σ) g(x) g(y)`.
///
/// Even orders >= 2 get the same DC removal as the separable kernels, so for
/// `n <= 2` the result coincides with the multinomial combination of
/// [`gaussian_derivative_kernel`]s.
pub fn directional_derivative_kernel<T: Real>(direction: (f64, f64), order: usize, sigma: f64) -> Result<Kernel2d<T>> {
    let norm = direction.0.hypot(direction.1);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, |e| = {norm}"
        )));
    }
    let g0 = gaussian_kernel::<f64>(sigma, GaussianMode::Sampled);
    let r = g0.radius() as isize;
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = sign * sigma.powi(-(order as i32));
    let mut raw = Vec::with_capacity((2 * r as usize + 1).pow(2));
    let mut base = Vec::with_capacity(raw.capacity());
    for dy in -r..=r {
        for dx in -r..=r {
            let proj = (direction.0 * dx as f64 + direction.1 * dy as f64) / sigma;
            let g = g0.at(dx) * g0.at(dy);
            raw.push(scale * hermite(order, proj) * g);
            base.push(g);
        }
    }
    if order > 0 && order.is_multiple_of(2) {
        let dc: f64 = raw.iter().sum();
        for (v, g) in raw.iter_mut().zip(&base) {
            *v -= dc * g;
        }
    }
    Ok(Kernel2d::from_weights(
        g0.radius(),
        raw.into_iter().map(T::from_f64_lossy).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_is_gaussian() {
        let a = gaussian_derivative_kernel::<f64>((0, 0), 1.5);
        let g = gaussian_kernel::<f64>(1.5, GaussianMode::Sampled);
        assert_eq!(a, Kernel2d::outer(&g, &g));
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn higher_orders_have_no_dc() {
        for &sigma in &[0.8, 1.0, 2.0, 3.3] {
            for ax in 0..=4 {
                for ay in 0..=(4 - ax) {
                    if ax + ay == 0 {
                        continue;
                    }
                    let k = gaussian_derivative_kernel::<f64>((ax, ay), sigma);
                    assert!(k.sum().abs() < 1e-10, "{ax},{ay} sigma {sigma}: {}", k.sum());
                }
            }
        }
    }

    #[test]
    fn first_order_parity() {
        let k = gaussian_derivative_kernel::<f64>((1, 0), 1.3);
        let r = k.radius() as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                assert_eq!(k.at(dy, dx), -k.at(dy, -dx));
                assert_eq!(k.at(dy, dx), k.at(-dy, dx));
            }
        }
    }

    #[test]
    fn normalization_factor() {
        let img = GridImage::<f64>::from_fn(21, 21, |x, y| (-(x * x + 2.0 * y * y) / 20.0).exp());
        let plain = scale_normalized_derivative(&img, (2, 0), ScaleParameter::new(2.0, 0.0).unwrap());
        let normed = scale_normalized_derivative(&img, (2, 0), ScaleParameter::new(2.0, 1.0).unwrap());
        for (a, b) in plain.pixels().iter().zip(normed.pixels()) {
            assert!((4.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScaleParameter::new(0.0, 1.0).is_err());
        assert!(ScaleParameter::new(1.0, 1.5).is_err());
        assert!(directional_derivative_kernel::<f64>((1.0, 1.0), 2, 1.0).is_err());
    }
}
