#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalechan::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
}

/// Direct six-loop convolution (cross-correlation), zero padding.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (bs, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; bs * cout * oh * ow];
    for n in 0..bs {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((n * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((n * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[bs, cout, oh, ow], out).unwrap()
}

/// Central finite differences of a scalar function of `x`.
pub fn numeric_grad(x: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise relative error; magnitudes below `1e-4` are
/// compared on an absolute scale of `1e-4`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform `[-1, 1)` tensor from a seed, in either precision.
pub fn seeded<T: scalechan::scalar::Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    random_tensor(shape, &mut rng(seed)).cast()
}
