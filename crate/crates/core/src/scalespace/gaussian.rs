use super::GridImage;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GaussianMode {
    /// Continuous Gaussian sampled at integer offsets, then renormalised.
    #[default]
    Sampled,
    /// `e^{-t} I_n(t)` with `t = σ²` (modified Bessel functions).
    DiscreteAnalogue,
}

/// Symmetric-support 1-D kernel; `weights[radius + u]` holds offset `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1d<T> {
    radius: usize,
    weights: Vec<T>,
}

impl<T: Real> Kernel1d<T> {
    pub fn from_weights(radius: usize, weights: Vec<T>) -> Self {
        assert_eq!(weights.len(), 2 * radius + 1, "kernel length must be 2 * radius + 1");
        Kernel1d { radius, weights }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn at(&self, offset: isize) -> T {
        let idx = offset + self.radius as isize;
        if idx < 0 || idx as usize >= self.weights.len() {
            T::zero()
        } else {
            self.weights[idx as usize]
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|w| w.to_f64_lossy()).sum()
    }
}

/// 2-D kernel on a `(2r+1) x (2r+1)` support, row-major with rows along y.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d<T> {
    radius: usize,
    weights: Vec<T>,
}

impl<T: Real> Kernel2d<T> {
    pub fn from_weights(radius: usize, weights: Vec<T>) -> Self {
        let side = 2 * radius + 1;
        assert_eq!(weights.len(), side * side, "kernel needs (2r+1)^2 weights");
        Kernel2d { radius, weights }
    }

    /// `ky(dy) * kx(dx)`.
    pub fn outer(kx: &Kernel1d<T>, ky: &Kernel1d<T>) -> Self {
        let radius = kx.radius.max(ky.radius);
        let r = radius as isize;
        let mut weights = Vec::with_capacity((2 * radius + 1).pow(2));
        for dy in -r..=r {
            for dx in -r..=r {
                weights.push(ky.at(dy) * kx.at(dx));
            }
        }
        Kernel2d { radius, weights }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn at(&self, dy: isize, dx: isize) -> T {
        let r = self.radius as isize;
        if dy.abs() > r || dx.abs() > r {
            return T::zero();
        }
        let side = 2 * r + 1;
        self.weights[((dy + r) * side + dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|w| w.to_f64_lossy()).sum()
    }

    /// True 2-D convolution with zero boundary.
    pub fn convolve(&self, image: &GridImage<T>) -> GridImage<T> {
        let (w, h) = (image.width(), image.height());
        let r = self.radius as isize;
        let mut out = GridImage::zeros(w, h);
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = T::zero();
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += image.get_or_zero(i - dy, j - dx) * self.at(dy, dx);
                    }
                }
                out.pixels_mut()[i as usize * w + j as usize] = acc;
            }
        }
        out
    }
}

pub(crate) fn kernel_radius(sigma: f64) -> usize {
    (4.0 * sigma).ceil() as usize + 1
}

/// Sampled or discrete-analogue Gaussian truncated at radius
/// `ceil(4σ) + 1` and renormalised to unit sum.
pub fn gaussian_kernel<T: Real>(sigma: f64, mode: GaussianMode) -> Kernel1d<T> {
    assert!(
        sigma > 0.0 && sigma.is_finite(),
        "gaussian_kernel: sigma must be positive, got {sigma}"
    );
    let radius = kernel_radius(sigma);
    let raw = match mode {
        GaussianMode::Sampled => (0..=2 * radius)
            .map(|i| {
                let u = i as f64 - radius as f64;
                (-0.5 * u * u / (sigma * sigma)).exp()
            })
            .collect::<Vec<_>>(),
        GaussianMode::DiscreteAnalogue => discrete_analogue(sigma * sigma, radius),
    };
    let total: f64 = raw.iter().sum();
    Kernel1d {
        radius,
        weights: raw.iter().map(|v| T::from_f64_lossy(v / total)).collect(),
    }
}

/// `e^{-t} I_{|u|}(t)` for `u` in `-radius..=radius`, up to a common factor.
///
/// Miller's algorithm: run `I_{n-1} = I_{n+1} + (2n / t) I_n` downward from
/// well above the support, then fix the scale with `Σ_n e^{-t} I_n(t) = 1`.
fn discrete_analogue(t: f64, radius: usize) -> Vec<f64> {
    let start = radius + 32 + (2.0 * t.sqrt()).ceil() as usize + (t.ceil() as usize).min(64);
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for n in (1..=start).rev() {
        vals[n - 1] = vals[n + 1] + (2.0 * n as f64 / t) * vals[n];
        if vals[n - 1] > 1e250 {
            for v in vals.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let total = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
    (0..=2 * radius)
        .map(|i| vals[(i as isize - radius as isize).unsigned_abs()] / total)
        .collect()
}

/// Separable true convolution (`out[i] = Σ_u in[i - u] k[u]`) with zero
/// boundary: `kx` along rows, then `ky` along columns.
pub(crate) fn convolve_separable<T: Real>(image: &GridImage<T>, kx: &Kernel1d<T>, ky: &Kernel1d<T>) -> GridImage<T> {
    let (w, h) = (image.width(), image.height());
    let src = image.pixels();
    let mut tmp = vec![T::zero(); w * h];
    let rx = kx.radius as isize;
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        for j in 0..w as isize {
            let mut acc = T::zero();
            for u in -rx..=rx {
                let k = j - u;
                if k >= 0 && (k as usize) < w {
                    acc += row[k as usize] * kx.weights[(u + rx) as usize];
                }
            }
            tmp[i * w + j as usize] = acc;
        }
    }
    let ry = ky.radius as isize;
    let mut out = vec![T::zero(); w * h];
    for i in 0..h as isize {
        for u in -ry..=ry {
            let k = i - u;
            if k < 0 || k as usize >= h {
                continue;
            }
            let weight = ky.weights[(u + ry) as usize];
            let src_row = &tmp[k as usize * w..(k as usize + 1) * w];
            let dst_row = &mut out[i as usize * w..(i as usize + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += s * weight;
            }
        }
    }
    GridImage::from_pixels(w, h, out).expect("same size")
}

/// Isotropic Gaussian blur, realised separably.
pub fn blur<T: Real>(image: &GridImage<T>, sigma: f64, mode: GaussianMode) -> GridImage<T> {
    let k = gaussian_kernel::<T>(sigma, mode);
    convolve_separable(image, &k, &k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_to_one_and_symmetric() {
        for &sigma in &[0.3, 0.5, 1.0, 1.75, 3.5, 7.0] {
            for mode in [GaussianMode::Sampled, GaussianMode::DiscreteAnalogue] {
                let k = gaussian_kernel::<f64>(sigma, mode);
                assert!((k.sum() - 1.0).abs() < 1e-12, "sigma {sigma} {mode:?}");
                assert_eq!(k.radius(), (4.0 * sigma).ceil() as usize + 1);
                for u in 0..=k.radius() as isize {
                    assert_eq!(k.at(u), k.at(-u));
                }
            }
        }
    }

    #[test]
    fn narrow_kernel_is_peaked() {
        let k = gaussian_kernel::<f64>(0.3, GaussianMode::Sampled);
        let expected_center = 1.0 / (1.0 + 2.0 * (-0.5 / 0.09f64).exp() + 2.0 * (-2.0 / 0.09f64).exp());
        assert!(k.at(0) > 0.9);
        assert!((k.at(0) - expected_center).abs() < 1e-12);
    }

    #[test]
    fn discrete_analogue_variance_is_t() {
        // The discrete analogue has variance exactly t = σ² (up to truncation).
        for &sigma in &[0.5, 1.0, 2.0, 4.0] {
            let k = gaussian_kernel::<f64>(sigma, GaussianMode::DiscreteAnalogue);
            let r = k.radius() as isize;
            let var: f64 = (-r..=r).map(|u| (u * u) as f64 * k.at(u)).sum();
            assert!(
                (var - sigma * sigma).abs() < 2e-3 * sigma * sigma,
                "sigma {sigma}: {var}"
            );
        }
    }

    #[test]
    fn discrete_analogue_matches_bessel_series() {
        // e^{-t} I_n(t) = e^{-t} Σ_k (t/2)^{2k+n} / (k! (k+n)!)
        let t: f64 = 1.5;
        let k = gaussian_kernel::<f64>(t.sqrt(), GaussianMode::DiscreteAnalogue);
        let r = k.radius();
        let series = |n: usize| {
            let mut term = (t / 2.0).powi(n as i32) / (1..=n).map(|v| v as f64).product::<f64>();
            let mut s = 0.0;
            for j in 0..60 {
                s += term;
                term *= (t / 2.0).powi(2) / ((j + 1) as f64 * (j + 1 + n) as f64);
            }
            (-t).exp() * s
        };
        let mass: f64 = series(0) + 2.0 * (1..=r).map(series).sum::<f64>();
        for n in 0..=r {
            assert!((k.at(n as isize) - series(n) / mass).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn separable_matches_direct_2d() {
        let img = GridImage::<f64>::from_fn(9, 7, |x, y| (0.3 * x).sin() + 0.1 * y * y);
        let k = gaussian_kernel::<f64>(1.2, GaussianMode::Sampled);
        let a = blur(&img, 1.2, GaussianMode::Sampled);
        let b = Kernel2d::outer(&k, &k).convolve(&img);
        assert!(a.residual(&b).0 < 1e-12);
    }
}
