use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::ChannelNet;
use super::spec::PoolSpace;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scalespace::{rescale_image, GridImage, Interpolation};
use crate::tensor::{batchnorm2d_forward, softmax_rows, Mode, Tensor, BATCHNORM_EPS};

/// Where in the base net channel activations are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeDepth {
    /// The rescaled, cropped channel inputs.
    Input,
    /// After the `n`-th ReLU (1-based).
    Block(usize),
    /// Per-channel outputs in the pooling space.
    Output,
}

/// Per-channel feature maps of one batch at one depth.
#[derive(Clone, Debug)]
pub struct ChannelActivations<T> {
    pub depth: ProbeDepth,
    /// One `[B, C, H, W]` (or `[B, 10]` at the output) tensor per grid scale.
    pub per_scale: Vec<Tensor<T>>,
}

impl<T: Real> ChannelActivations<T> {
    pub fn num_scales(&self) -> usize {
        self.per_scale.len()
    }
}

/// Channel activations of a foveated network in inference mode.
pub fn channel_activations<T: Real>(
    net: &mut ChannelNet<T>,
    x: &Tensor<T>,
    depth: ProbeDepth,
) -> Result<ChannelActivations<T>> {
    let b = x.dims4("channel_activations")?[0];
    let s = net.spec().grid.len();
    let xs = net.channel_inputs(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stacked = match depth {
        ProbeDepth::Input => xs,
        ProbeDepth::Block(n) => {
            let cut = net
                .base()
                .depth_cutoff(n)
                .ok_or_else(|| Error::InvalidArgument(format!("base net has no block {n}")))?;
            net.base_mut().forward_prefix(&xs, cut, Mode::Eval, &mut rng)?.0
        }
        ProbeDepth::Output => {
            let (z, _) = net.base_mut().forward(&xs, Mode::Eval, &mut rng)?;
            match net.spec().pool_space {
                PoolSpace::Probabilities => softmax_rows(&z)?,
                PoolSpace::Logits => z,
            }
        }
    };
    let per = stacked.numel() / (b * s);
    let inner: Vec<usize> = stacked.shape()[1..].to_vec();
    let mut per_scale = Vec::with_capacity(s);
    for si in 0..s {
        let mut data = Vec::with_capacity(b * per);
        for bi in 0..b {
            let off = (bi * s + si) * per;
            data.extend_from_slice(&stacked.data()[off..off + per]);
        }
        let mut shape = vec![b];
        shape.extend_from_slice(&inner);
        per_scale.push(Tensor::from_vec(&shape, data)?);
    }
    Ok(ChannelActivations { depth, per_scale })
}

/// Batch normalisation (unit scale, zero shift) of several channels'
/// activations with one joint set of statistics over batch, channels and
/// space.
pub fn shared_batchnorm_statistics<T: Real>(channels: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    let first = channels
        .first()
        .ok_or_else(|| Error::InvalidArgument("no channel activations".into()))?;
    let [_, c, h, w] = first.dims4("shared_batchnorm")?;
    let mut data = Vec::new();
    let mut sizes = Vec::with_capacity(channels.len());
    for t in channels {
        let [b, ci, hi, wi] = t.dims4("shared_batchnorm")?;
        if (ci, hi, wi) != (c, h, w) {
            return Err(Error::shape(
                "shared_batchnorm",
                "feature map",
                format!("{c}x{h}x{w}"),
                format!("{ci}x{hi}x{wi}"),
            ));
        }
        sizes.push(b);
        data.extend_from_slice(t.data());
    }
    let total: usize = sizes.iter().sum();
    let stacked = Tensor::from_vec(&[total, c, h, w], data)?;
    let gamma = Tensor::full(&[c], T::one());
    let beta = Tensor::zeros(&[c]);
    let (mut rm, mut rv) = (vec![T::zero(); c], vec![T::one(); c]);
    let (y, _) = batchnorm2d_forward(
        &stacked,
        &gamma,
        &beta,
        &mut rm,
        &mut rv,
        Mode::Train,
        0.0,
        BATCHNORM_EPS,
    )?;
    let plane = c * h * w;
    let mut out = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for b in sizes {
        out.push(Tensor::from_vec(
            &[b, c, h, w],
            y.data()[off * plane..(off + b) * plane].to_vec(),
        )?);
        off += b;
    }
    Ok(out)
}

/// Residuals of the discrete covariance relation
/// `Γ(S_t f)[s] ≈ Γ(f)[s + k]` for `t = γ^k`.
#[derive(Clone, Debug)]
pub struct CovarianceReport {
    pub t: f64,
    pub shift: i32,
    pub depth: ProbeDepth,
    /// Channel pairs `(s, s + k)` compared.
    pub pairs: Vec<(usize, usize)>,
    pub max_abs: f64,
    pub rms: f64,
    /// `max - min` of the reference activations over the compared channels.
    pub range: f64,
    /// The same comparison on the channel inputs, normalised by their range:
    /// the part of the residual caused by resampling alone.
    pub interpolation_floor: f64,
}

impl CovarianceReport {
    pub const CSV_HEADER: &'static str = "t,shift,depth,pairs,max_abs,rms,range,normalized,interpolation_floor";

    pub fn normalized(&self) -> f64 {
        if self.range > 0.0 {
            self.max_abs / self.range
        } else {
            self.max_abs
        }
    }

    pub fn csv_row(&self) -> String {
        let depth = match self.depth {
            ProbeDepth::Input => "input".to_string(),
            ProbeDepth::Block(n) => format!("block{n}"),
            ProbeDepth::Output => "output".to_string(),
        };
        format!(
            "{},{},{depth},{},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.shift,
            self.pairs.len(),
            self.max_abs,
            self.rms,
            self.range,
            self.normalized(),
            self.interpolation_floor
        )
    }
}

fn pair_residual<T: Real>(
    a: &ChannelActivations<T>,
    b: &ChannelActivations<T>,
    pairs: &[(usize, usize)],
) -> (f64, f64, f64) {
    let (mut max_abs, mut sq, mut n) = (0.0f64, 0.0, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(s, r) in pairs {
        for (&p, &q) in a.per_scale[s].data().iter().zip(b.per_scale[r].data()) {
            let (p, q) = (p.to_f64_lossy(), q.to_f64_lossy());
            let d = (p - q).abs();
            max_abs = max_abs.max(d);
            sq += d * d;
            n += 1;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    (max_abs, (sq / n.max(1) as f64).sqrt(), hi - lo)
}

/// Compares channel activations of `S_t f` against index-shifted
/// activations of `f`. `S_t` is a bicubic, center-anchored rescale within
/// the same frame; `t` must be an integer power of the grid ratio.
pub fn covariance_probe<T: Real>(
    net: &mut ChannelNet<T>,
    f: &GridImage<T>,
    t: f64,
    depth: ProbeDepth,
) -> Result<CovarianceReport> {
    let grid = net.spec().grid;
    let shift = grid
        .shift_for_ratio(t)
        .ok_or_else(|| Error::InvalidArgument(format!("t = {t} is not a power of the grid ratio {}", grid.gamma)))?;
    let s = grid.len() as i32;
    let pairs: Vec<(usize, usize)> = (0..s)
        .filter(|&i| (0..s).contains(&(i + shift)))
        .map(|i| (i as usize, (i + shift) as usize))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!("shift {shift} leaves no channel pairs")));
    }
    let (w, h) = (f.width(), f.height());
    let to_tensor = |g: &GridImage<T>| Tensor::from_vec(&[1, 1, h, w], g.pixels().to_vec());
    let x = to_tensor(f)?;
    let xt = if t == 1.0 {
        x.clone()
    } else {
        to_tensor(&rescale_image(f, t, Interpolation::Bicubic, (w, h)))?
    };
    let inputs = (
        channel_activations(net, &xt, ProbeDepth::Input)?,
        channel_activations(net, &x, ProbeDepth::Input)?,
    );
    let (in_max, _, in_range) = pair_residual(&inputs.0, &inputs.1, &pairs);
    let (max_abs, rms, range) = if depth == ProbeDepth::Input {
        pair_residual(&inputs.0, &inputs.1, &pairs)
    } else {
        let a = channel_activations(net, &xt, depth)?;
        let b = channel_activations(net, &x, depth)?;
        pair_residual(&a, &b, &pairs)
    };
    Ok(CovarianceReport {
        t,
        shift,
        depth,
        pairs,
        max_abs,
        rms,
        range,
        interpolation_floor: if in_range > 0.0 { in_max / in_range } else { in_max },
    })
}
