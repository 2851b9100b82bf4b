use rayon::prelude::*;

use super::grid::ScaleGrid;
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Bilinear, center-anchored magnification of every `(C, H, W)` image of a
/// `[B, C, H, W]` batch by `m` into a `size x size` frame:
/// `out(x) = in(x / m)` in centered coordinates. Samples past the border
/// repeat the edge pixel.
pub fn magnify_batch<T: Real>(x: &Tensor<T>, m: f64, size: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims4("magnify_batch")?;
    let plane_in = h * w;
    let plane_out = size * size;
    // Source taps per output row / column: (lower index, upper index, weight of upper).
    let taps = |n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..size)
            .map(|j| {
                let xc = j as f64 + 0.5 - size as f64 / 2.0;
                let u = (xc / m + n_in as f64 / 2.0 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = u.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, u - lo as f64)
            })
            .collect()
    };
    let (rows, cols) = (taps(h), taps(w));
    let mut out = vec![T::zero(); b * c * plane_out];
    out.par_chunks_mut(plane_out)
        .zip(x.data().par_chunks(plane_in))
        .for_each(|(dst, src)| {
            for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                let fr = T::from_f64_lossy(fr);
                for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let fc = T::from_f64_lossy(fc);
                    let top = src[r0 * w + c0] + (src[r0 * w + c1] - src[r0 * w + c0]) * fc;
                    let bottom = src[r1 * w + c0] + (src[r1 * w + c1] - src[r1 * w + c0]) * fc;
                    dst[i * size + j] = top + (bottom - top) * fr;
                }
            }
        });
    Tensor::from_vec(&[b, c, size, size], out)
}

/// Stacks the channel inputs of a batch along the batch axis: row
/// `b * |grid| + s` holds image `b` magnified by the `s`-th grid scale and
/// cropped to `support`.
pub fn channel_inputs<T: Real>(x: &Tensor<T>, grid: &ScaleGrid, support: usize) -> Result<Tensor<T>> {
    let [b, c, _, _] = x.dims4("channel_inputs")?;
    let per_scale: Vec<Tensor<T>> = grid
        .scales()
        .into_iter()
        .map(|m| magnify_batch(x, m, support))
        .collect::<Result<_>>()?;
    let s = per_scale.len();
    let img = c * support * support;
    let mut data = vec![T::zero(); b * s * img];
    for (si, t) in per_scale.iter().enumerate() {
        for bi in 0..b {
            let dst = (bi * s + si) * img;
            data[dst..dst + img].copy_from_slice(&t.data()[bi * img..(bi + 1) * img]);
        }
    }
    Tensor::from_vec(&[b * s, c, support, support], data)
}
