use super::GridImage;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Interpolation {
    #[default]
    Bilinear,
    /// Catmull-Rom cubic convolution (`a = -0.5`).
    Bicubic,
}

const CUBIC_A: f64 = -0.5;

fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Bilinear sample at continuous pixel index `(row, col)`; integer values
/// hit pixel centers.
pub fn sample_bilinear<T: Real>(image: &GridImage<T>, row: f64, col: f64) -> T {
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let mut acc = 0.0;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        if wr == 0.0 {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            if wc == 0.0 {
                continue;
            }
            acc += wr * wc * image.get_or_zero(r0 + dr, c0 + dc).to_f64_lossy();
        }
    }
    T::from_f64_lossy(acc)
}

/// Catmull-Rom bicubic sample at continuous pixel index `(row, col)`.
pub fn sample_bicubic<T: Real>(image: &GridImage<T>, row: f64, col: f64) -> T {
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let wr: [f64; 4] = std::array::from_fn(|k| cubic_weight(fr - (k as f64 - 1.0)));
    let wc: [f64; 4] = std::array::from_fn(|k| cubic_weight(fc - (k as f64 - 1.0)));
    let mut acc = 0.0;
    for (dr, &a) in wr.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let mut row_acc = 0.0;
        for (dc, &b) in wc.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            row_acc += b * image
                .get_or_zero(r0 + dr as isize - 1, c0 + dc as isize - 1)
                .to_f64_lossy();
        }
        acc += a * row_acc;
    }
    T::from_f64_lossy(acc)
}

/// Rescales `image` by `s` around its center into an `out_size = (width,
/// height)` frame: `out(x) = image(x / s)` in centered coordinates, so
/// `s > 1` magnifies. Samples falling outside the source read as zero.
pub fn rescale_image<T: Real>(
    image: &GridImage<T>,
    s: f64,
    interpolation: Interpolation,
    out_size: (usize, usize),
) -> GridImage<T> {
    assert!(
        s > 0.0 && s.is_finite(),
        "rescale_image: scale must be positive, got {s}"
    );
    let (ow, oh) = out_size;
    let (iw, ih) = (image.width() as f64, image.height() as f64);
    let mut out = GridImage::zeros(ow, oh);
    for i in 0..oh {
        for j in 0..ow {
            let (x, y) = out.center_coords(i, j);
            let col = x / s + iw / 2.0 - 0.5;
            let row = y / s + ih / 2.0 - 0.5;
            let v = match interpolation {
                Interpolation::Bilinear => sample_bilinear(image, row, col),
                Interpolation::Bicubic => sample_bicubic(image, row, col),
            };
            out.pixels_mut()[i * ow + j] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_weights_partition_unity() {
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let total: f64 = (-1..=2).map(|o| cubic_weight(t - o as f64)).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
    }

    #[test]
    fn identity_at_unit_scale() {
        let img = GridImage::<f64>::from_fn(7, 6, |x, y| x * 0.37 - y * y + 2.0);
        for interp in [Interpolation::Bilinear, Interpolation::Bicubic] {
            assert_eq!(rescale_image(&img, 1.0, interp, (7, 6)), img);
        }
    }

    #[test]
    fn crop_and_pad_keep_center() {
        let img = GridImage::<f64>::from_fn(8, 8, |x, y| x + 10.0 * y);
        let crop = rescale_image(&img, 1.0, Interpolation::Bilinear, (4, 4));
        assert_eq!(crop.get(0, 0), img.get(2, 2));
        let pad = rescale_image(&img, 1.0, Interpolation::Bilinear, (12, 12));
        assert_eq!(pad.get(2, 2), img.get(0, 0));
        assert_eq!(pad.get(0, 0), 0.0);
    }
}
