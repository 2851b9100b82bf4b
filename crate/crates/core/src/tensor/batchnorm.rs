//! Per-channel batch normalisation over `(B, H, W)`.
//!
//! Batch reductions first form one partial sum per sample and then combine
//! the partials with [`order_invariant_sum`], so the statistics are
//! bit-identical under any reordering of the batch. The scale-channel
//! networks stack all channels into the batch axis and rely on this.

use super::{Mode, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{order_invariant_sum, Real};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel reduction of `f(i, c, plane)` over samples, order invariant.
fn reduce<T: Real>(b: usize, c: usize, plane: usize, data: &[T], f: impl Fn(usize, usize, &[T]) -> T) -> Vec<T> {
    (0..c)
        .map(|ch| {
            let mut partials: Vec<T> = (0..b)
                .map(|i| {
                    let off = (i * c + ch) * plane;
                    f(i, ch, &data[off..off + plane])
                })
                .collect();
            order_invariant_sum(&mut partials)
        })
        .collect()
}

/// Forward pass. In training mode normalises with the batch statistics and
/// updates the running statistics (`running_var` receives the unbiased
/// estimate); in eval mode uses the running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut [T],
    running_var: &mut [T],
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let [b, c, h, w] = input.dims4("batchnorm2d")?;
    for (axis, len) in [
        ("gamma length", gamma.numel()),
        ("beta length", beta.numel()),
        ("running mean length", running_mean.len()),
        ("running var length", running_var.len()),
    ] {
        if len != c {
            return Err(Error::shape("batchnorm2d", axis, c, len));
        }
    }
    let plane = h * w;
    let eps_t = T::from_f64_lossy(eps);
    let (mean, var) = match mode {
        Mode::Train => {
            if b < 2 {
                return Err(Error::InvalidArgument(
                    "batchnorm2d: training mode needs a batch of at least 2".into(),
                ));
            }
            let n = T::from_usize(b * plane).unwrap();
            let mean: Vec<T> = reduce(b, c, plane, input.data(), |_, _, p| p.iter().copied().sum())
                .into_iter()
                .map(|s| s / n)
                .collect();
            let var: Vec<T> = reduce(b, c, plane, input.data(), |_, ch, p| {
                p.iter().map(|&x| (x - mean[ch]) * (x - mean[ch])).sum()
            })
            .into_iter()
            .map(|s| s / n)
            .collect();
            let m = T::from_f64_lossy(momentum);
            let unbias = n / (n - T::one());
            for ch in 0..c {
                running_mean[ch] = (T::one() - m) * running_mean[ch] + m * mean[ch];
                running_var[ch] = (T::one() - m) * running_var[ch] + m * var[ch] * unbias;
            }
            (mean, var)
        }
        Mode::Eval => (running_mean.to_vec(), running_var.to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
    let mut xhat = input.data().to_vec();
    let mut out = vec![T::zero(); input.numel()];
    for (idx, (xh, o)) in xhat.chunks_mut(plane).zip(out.chunks_mut(plane)).enumerate() {
        let ch = idx % c;
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        for (x, y) in xh.iter_mut().zip(o.iter_mut()) {
            *x = (*x - mean[ch]) * inv_std[ch];
            *y = g * *x + bt;
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), out)?,
        BatchNormCache {
            xhat: Tensor::from_vec(input.shape(), xhat)?,
            inv_std,
            mode,
        },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: Option<&BatchNormCache<T>>,
    gamma: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let cache = cache.ok_or(Error::MissingActivation {
        op: "batchnorm2d_backward",
        what: "normalised input",
    })?;
    let [b, c, h, w] = cache.xhat.dims4("batchnorm2d_backward")?;
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::shape(
            "batchnorm2d_backward",
            "grad_out shape",
            format!("{:?}", cache.xhat.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let plane = h * w;
    let xhat = cache.xhat.data();
    let dy = grad_out.data();
    let sum_dy = reduce(b, c, plane, dy, |_, _, p| p.iter().copied().sum());
    let sum_dy_xhat = reduce(b, c, plane, dy, |i, ch, p| {
        let off = (i * c + ch) * plane;
        p.iter().zip(&xhat[off..off + plane]).map(|(&g, &x)| g * x).sum()
    });
    let n = T::from_usize(b * plane).unwrap();
    let mut gx = vec![T::zero(); dy.len()];
    for (idx, ((g, d), x)) in gx
        .chunks_mut(plane)
        .zip(dy.chunks(plane))
        .zip(xhat.chunks(plane))
        .enumerate()
    {
        let ch = idx % c;
        let scale = gamma.data()[ch] * cache.inv_std[ch];
        match cache.mode {
            Mode::Train => {
                let mean_dy = sum_dy[ch] / n;
                let mean_dy_xhat = sum_dy_xhat[ch] / n;
                for ((gv, &dv), &xv) in g.iter_mut().zip(d).zip(x) {
                    *gv = scale * (dv - mean_dy - xv * mean_dy_xhat);
                }
            }
            Mode::Eval => {
                for (gv, &dv) in g.iter_mut().zip(d) {
                    *gv = scale * dv;
                }
            }
        }
    }
    Ok((Tensor::from_vec(grad_out.shape(), gx)?, sum_dy_xhat, sum_dy))
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::parameter(&[channels], vec![T::one(); channels]).expect("shape"),
            beta: Tensor::parameter(&[channels], vec![T::zero(); channels]).expect("shape"),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: BATCHNORM_MOMENTUM,
            eps: BATCHNORM_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        batchnorm2d_forward(
            input,
            &self.gamma,
            &self.beta,
            &mut self.running_mean,
            &mut self.running_var,
            mode,
            self.momentum,
            self.eps,
        )
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, cache: Option<&BatchNormCache<T>>) -> Result<Tensor<T>> {
        let (gx, gg, gb) = batchnorm2d_backward(grad_out, cache, &self.gamma)?;
        self.gamma.accumulate_grad(&gg)?;
        self.beta.accumulate_grad(&gb)?;
        Ok(gx)
    }
}
