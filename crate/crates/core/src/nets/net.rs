use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rescale::{channel_inputs, magnify_batch};
use super::spec::{Aggregation, ChannelNetSpec, PoolSpace, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::scalar::{order_invariant_sum, Real};
use crate::tensor::checkpoint::{self, Entry};
use crate::tensor::{
    conv2d_backward, conv2d_forward, cross_entropy_with_logits, dropout_backward, dropout_forward, relu_backward,
    relu_forward, softmax_backward, softmax_rows, Dense, Layer, Mode, Sequential, Tape, Tensor,
};

/// Probability floor inside the loss on aggregated probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// A base network shared by every channel of a scale grid, plus the
/// aggregation over channels.
///
/// There is exactly one copy of the base parameters. Foveated forward
/// passes stack all channels into the batch axis, so shared batch
/// normalisation is ordinary batch normalisation over that axis and the
/// backward pass sums the gradient contributions of all channels.
#[derive(Clone, Debug)]
pub struct ChannelNet<T> {
    spec: ChannelNetSpec,
    base: Sequential<T>,
    mixing: Option<Dense<T>>,
}

/// Class scores of a forward pass.
#[derive(Clone, Debug)]
pub struct NetOutput<T> {
    /// `[B, 10]` aggregated scores. Probabilities, except that max pooling
    /// of probabilities does not renormalise (the loss does).
    pub scores: Tensor<T>,
    /// `[B, |grid|, 10]` per-channel outputs in the pooling space (foveated
    /// modes only).
    pub channel_outputs: Option<Tensor<T>>,
}

impl<T: Real> NetOutput<T> {
    pub fn predictions(&self) -> Vec<usize> {
        self.scores.data().chunks(NUM_CLASSES).map(argmax_row).collect()
    }
}

#[derive(Debug)]
struct FoveatedCache<T> {
    tape: Tape<T>,
    pooled: Tensor<T>,
    argmax: Vec<usize>,
    concat_input: Option<Tensor<T>>,
    final_logits: Option<Tensor<T>>,
}

#[derive(Debug)]
struct WindowChannel<T> {
    tape: Tape<T>,
    features: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
    mask: Option<Vec<T>>,
    pooled: Tensor<T>,
}

#[derive(Debug)]
struct WindowCache<T> {
    channels: Vec<Option<WindowChannel<T>>>,
    /// For each `(b, c)`: winning channel and flat spatial position.
    argmax: Vec<(usize, usize)>,
    final_logits: Option<Tensor<T>>,
}

#[derive(Debug)]
enum CacheKind<T> {
    Foveated(FoveatedCache<T>),
    Window(WindowCache<T>),
}

/// State a training-mode forward pass leaves for [`ChannelNet::backward`].
#[derive(Debug)]
pub struct ForwardCache<T> {
    kind: CacheKind<T>,
    batch: usize,
    scores: Tensor<T>,
}

fn argmax_row<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean of `-ln(max(p_y / sum(p), floor))` and its gradient with respect
/// to `p`. Max pooling of probabilities leaves rows that sum to more than
/// one; without the normalisation, channels that confidently back different
/// classes drive the loss to zero while the argmax stays ambiguous.
fn prob_loss<T: Real>(scores: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [b, c] = scores.dims2("aggregated_loss")?;
    if labels.len() != b {
        return Err(Error::shape("aggregated_loss", "label count", b, labels.len()));
    }
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let inv_b = T::one() / T::from_usize(b).unwrap();
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); b * c];
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::LabelOutOfRange { label: y, classes: c });
        }
        let row = &scores.data()[i * c..(i + 1) * c];
        let total = row.iter().fold(T::zero(), |a, &v| a + v);
        let q = row[y] / total;
        loss -= q.max(floor).ln();
        if q > floor {
            for g in &mut grad[i * c..(i + 1) * c] {
                *g = inv_b / total;
            }
            grad[i * c + y] -= inv_b / row[y];
        }
    }
    Ok((loss * inv_b, Tensor::from_vec(&[b, c], grad)?))
}

impl<T: Real> ChannelNet<T> {
    pub fn new<R: Rng + ?Sized>(spec: ChannelNetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let base = Sequential::build(&spec.base_layers, [1, spec.support, spec.support], rng)?;
        if base.widths().last() != Some(&NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!(
                "base net must end in {NUM_CLASSES} outputs"
            )));
        }
        let mixing = match spec.aggregation {
            Aggregation::Concat => Some(Dense::new(spec.grid.len() * NUM_CLASSES, NUM_CLASSES, rng)?),
            _ => None,
        };
        if spec.aggregation == Aggregation::SlidingWindowMax {
            Self::window_head_indices(&base)?;
        }
        Ok(ChannelNet { spec, base, mixing })
    }

    /// Convenience constructor with a ChaCha8 stream seeded by `seed`.
    pub fn with_seed(spec: ChannelNetSpec, seed: u64) -> Result<Self> {
        Self::new(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn spec(&self) -> &ChannelNetSpec {
        &self.spec
    }

    pub fn base(&self) -> &Sequential<T> {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut Sequential<T> {
        &mut self.base
    }

    pub fn mixing(&self) -> Option<&Dense<T>> {
        self.mixing.as_ref()
    }

    pub fn mixing_mut(&mut self) -> Option<&mut Dense<T>> {
        self.mixing.as_mut()
    }

    pub fn num_parameters(&self) -> usize {
        self.base.num_parameters() + self.mixing.as_ref().map_or(0, |d| d.weight.numel() + d.bias.numel())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.base.parameters_mut();
        if let Some(d) = self.mixing.as_mut() {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Inference-mode class scores.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<NetOutput<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(x, Mode::Eval, &mut rng).map(|(out, _)| out)
    }

    /// Forward pass on a `[B, 1, H, W]` batch.
    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        match self.spec.aggregation {
            Aggregation::SlidingWindowMax => self.window_forward(x, mode, rng),
            _ => self.foveated_forward(x, mode, rng),
        }
    }

    /// Loss of a cached forward pass against `labels`; accumulates all
    /// parameter gradients.
    pub fn backward(&mut self, cache: ForwardCache<T>, labels: &[usize]) -> Result<T> {
        let ForwardCache { kind, batch, scores } = cache;
        match kind {
            CacheKind::Foveated(c) => self.foveated_backward(c, batch, &scores, labels),
            CacheKind::Window(c) => self.window_backward(c, batch, &scores, labels),
        }
    }

    /// Training-mode forward and backward; returns the loss and the scores.
    pub fn train_batch(&mut self, x: &Tensor<T>, labels: &[usize], rng: &mut dyn RngCore) -> Result<(T, NetOutput<T>)> {
        let (out, cache) = self.forward(x, Mode::Train, rng)?;
        let loss = self.backward(cache, labels)?;
        Ok((loss, out))
    }

    /// The stacked per-channel inputs `[B * |grid|, 1, support, support]`.
    pub fn channel_inputs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        channel_inputs(x, &self.spec.grid, self.spec.support)
    }

    fn foveated_forward(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        let xs = self.channel_inputs(x)?;
        self.forward_channels(&xs, mode, rng)
    }

    /// Foveated forward pass from already stacked channel inputs
    /// `[B * |grid|, 1, support, support]` (row `b * |grid| + s`).
    pub fn forward_channels(
        &mut self,
        xs: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        if self.spec.aggregation == Aggregation::SlidingWindowMax {
            return Err(Error::InvalidArgument(
                "sliding-window networks have no stacked channel inputs".into(),
            ));
        }
        let s = self.spec.grid.len();
        let rows = xs.dims4("forward_channels")?[0];
        if rows % s != 0 {
            return Err(Error::shape(
                "forward_channels",
                "batch",
                format!("multiple of {s}"),
                rows,
            ));
        }
        let b = rows / s;
        let (z, tape) = self.base.forward(xs, mode, rng)?;
        let pooled = match self.spec.pool_space {
            PoolSpace::Probabilities => softmax_rows(&z)?,
            PoolSpace::Logits => z,
        };
        let k = NUM_CLASSES;
        let p = pooled.data();
        let mut argmax = Vec::new();
        let mut concat_input = None;
        let mut final_logits = None;
        let aggregated = match self.spec.aggregation {
            Aggregation::Max => {
                let mut out = vec![T::zero(); b * k];
                argmax = vec![0; b * k];
                for bi in 0..b {
                    for c in 0..k {
                        let mut best = 0;
                        for si in 1..s {
                            if p[(bi * s + si) * k + c] > p[(bi * s + best) * k + c] {
                                best = si;
                            }
                        }
                        argmax[bi * k + c] = best;
                        out[bi * k + c] = p[(bi * s + best) * k + c];
                    }
                }
                Tensor::from_vec(&[b, k], out)?
            }
            Aggregation::Avg => {
                let inv = T::one() / T::from_usize(s).unwrap();
                let mut out = vec![T::zero(); b * k];
                let mut vals = vec![T::zero(); s];
                for bi in 0..b {
                    for c in 0..k {
                        for si in 0..s {
                            vals[si] = p[(bi * s + si) * k + c];
                        }
                        let (lo, hi) = vals.iter().fold((vals[0], vals[0]), |(l, h), &v| (l.min(v), h.max(v)));
                        out[bi * k + c] = if lo == hi {
                            lo
                        } else {
                            order_invariant_sum(&mut vals) * inv
                        };
                    }
                }
                Tensor::from_vec(&[b, k], out)?
            }
            Aggregation::Concat => {
                let f = Tensor::from_vec(&[b, s * k], p.to_vec())?;
                let mixing = self.mixing.as_ref().expect("concat net has a mixing layer");
                let logits = mixing.forward(&f)?;
                concat_input = Some(f);
                logits
            }
            Aggregation::SlidingWindowMax => unreachable!("dispatched to window_forward"),
        };
        let scores = if self.spec.aggregation == Aggregation::Concat || self.spec.pool_space == PoolSpace::Logits {
            let probs = softmax_rows(&aggregated)?;
            final_logits = Some(aggregated);
            probs
        } else {
            aggregated
        };
        let channel_outputs = Some(pooled.clone().reshape(&[b, s, k])?);
        let out = NetOutput {
            scores: scores.clone(),
            channel_outputs,
        };
        let cache = ForwardCache {
            kind: CacheKind::Foveated(FoveatedCache {
                tape,
                pooled,
                argmax,
                concat_input,
                final_logits,
            }),
            batch: b,
            scores,
        };
        Ok((out, cache))
    }

    fn foveated_backward(
        &mut self,
        cache: FoveatedCache<T>,
        b: usize,
        scores: &Tensor<T>,
        labels: &[usize],
    ) -> Result<T> {
        let (loss, d_agg) = match &cache.final_logits {
            Some(logits) => cross_entropy_with_logits(logits, labels)?,
            None => prob_loss(scores, labels)?,
        };
        let d_pooled = self.pooled_gradient(&cache, b, &d_agg)?;
        let dz = match self.spec.pool_space {
            PoolSpace::Probabilities => softmax_backward(&cache.pooled, &d_pooled)?,
            PoolSpace::Logits => d_pooled,
        };
        self.base.backward(cache.tape, dz)?;
        Ok(loss)
    }

    /// Gradient with respect to the per-channel pooled outputs.
    fn pooled_gradient(&mut self, cache: &FoveatedCache<T>, b: usize, d_agg: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.spec.grid.len();
        let k = NUM_CLASSES;
        Ok(match self.spec.aggregation {
            Aggregation::Concat => {
                let mixing = self.mixing.as_mut().expect("concat net has a mixing layer");
                let df = mixing.backward(d_agg, cache.concat_input.as_ref())?;
                df.reshape(&[b * s, k])?
            }
            Aggregation::Max => {
                let mut g = vec![T::zero(); b * s * k];
                for bi in 0..b {
                    for c in 0..k {
                        let si = cache.argmax[bi * k + c];
                        g[(bi * s + si) * k + c] = d_agg.data()[bi * k + c];
                    }
                }
                Tensor::from_vec(&[b * s, k], g)?
            }
            Aggregation::Avg => {
                let inv = T::one() / T::from_usize(s).unwrap();
                let mut g = vec![T::zero(); b * s * k];
                for bi in 0..b {
                    for si in 0..s {
                        for c in 0..k {
                            g[(bi * s + si) * k + c] = d_agg.data()[bi * k + c] * inv;
                        }
                    }
                }
                Tensor::from_vec(&[b * s, k], g)?
            }
            Aggregation::SlidingWindowMax => unreachable!("dispatched to window_backward"),
        })
    }

    /// Indices of `(first dense, optional dropout, second dense)` in the
    /// base layers; the layers before the first dense must be convolutional.
    fn window_head_indices(base: &Sequential<T>) -> Result<(usize, Option<usize>, usize)> {
        let layers = base.layers();
        let first = layers
            .iter()
            .position(|l| matches!(l, Layer::Dense(_)))
            .ok_or_else(|| Error::InvalidArgument("sliding-window base net needs a dense head".into()))?;
        if layers[..first]
            .iter()
            .any(|l| matches!(l, Layer::BatchNorm2d(_) | Layer::Dropout(_)))
        {
            return Err(Error::InvalidArgument(
                "sliding-window feature extractor must be conv/relu only".into(),
            ));
        }
        let rest: Vec<usize> = (first + 1..layers.len()).collect();
        match rest.iter().map(|&i| &layers[i]).collect::<Vec<_>>()[..] {
            [Layer::Relu, Layer::Dropout(_), Layer::Dense(_)] => Ok((first, Some(first + 2), first + 3)),
            [Layer::Relu, Layer::Dense(_)] => Ok((first, None, first + 2)),
            _ => Err(Error::InvalidArgument(
                "sliding-window head must be dense - relu - [dropout] - dense".into(),
            )),
        }
    }

    fn dense_at(&self, idx: usize) -> &Dense<T> {
        match &self.base.layers()[idx] {
            Layer::Dense(d) => d,
            _ => unreachable!("checked by window_head_indices"),
        }
    }

    /// Dense weights `(out, C*h*w)` viewed as a convolution kernel over
    /// feature maps of `c` channels.
    fn dense_as_kernel(dense: &Dense<T>, c: usize) -> Result<Tensor<T>> {
        let out = dense.out_features();
        let fin = dense.in_features();
        let side = ((fin / c) as f64).sqrt().round() as usize;
        if side * side * c != fin {
            return Err(Error::shape(
                "sliding_window",
                "dense fan-in",
                format!("{c} x k x k"),
                fin,
            ));
        }
        Tensor::from_vec(&[out, c, side, side], dense.weight.data().to_vec())
    }

    /// Spatial extent of the rescaled image in channel `scale`.
    fn window_size(&self, x_size: usize, scale: f64) -> usize {
        (x_size as f64 * scale).round() as usize
    }

    fn window_forward(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        let [b, _, h, w] = x.dims4("sliding_window_forward")?;
        if h != w {
            return Err(Error::shape("sliding_window_forward", "width", h, w));
        }
        let (d1_idx, drop_idx, d2_idx) = Self::window_head_indices(&self.base)?;
        let k = NUM_CLASSES;
        let rate = drop_idx.map(|i| match self.base.layers()[i] {
            Layer::Dropout(r) => r,
            _ => 0.0,
        });
        let mut channels = Vec::new();
        for (si, scale) in self.spec.grid.scales().into_iter().enumerate() {
            let n = self.window_size(h, scale);
            if n < self.spec.support {
                log::warn!(
                    "sliding window: channel {si} (scale {scale:.4}) gives a {n}px image, smaller than the {}px receptive field; excluded",
                    self.spec.support
                );
                channels.push(None);
                continue;
            }
            let xs = magnify_batch(x, scale, n)?;
            let (features, tape) = self.base.forward_prefix(&xs, d1_idx, mode, rng)?;
            let c = features.shape()[1];
            let k1 = Self::dense_as_kernel(self.dense_at(d1_idx), c)?;
            let hidden_pre = conv2d_forward(&features, &k1, &self.dense_at(d1_idx).bias, 1, 0)?;
            let relu = relu_forward(&hidden_pre);
            let (hidden, mask) = match rate {
                Some(r) => dropout_forward(&relu, r, mode, rng)?,
                None => (relu, None),
            };
            let k2 = Self::dense_as_kernel(self.dense_at(d2_idx), hidden.shape()[1])?;
            let logits = conv2d_forward(&hidden, &k2, &self.dense_at(d2_idx).bias, 1, 0)?;
            let pooled = match self.spec.pool_space {
                PoolSpace::Probabilities => softmax_over_channels(&logits),
                PoolSpace::Logits => logits,
            };
            channels.push(Some(WindowChannel {
                tape,
                features,
                hidden_pre,
                hidden,
                mask,
                pooled,
            }));
        }
        if channels.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument(
                "sliding window: every channel is smaller than the receptive field".into(),
            ));
        }
        let mut agg = vec![T::neg_infinity(); b * k];
        let mut argmax = vec![(0usize, 0usize); b * k];
        for (si, ch) in channels.iter().enumerate() {
            let Some(ch) = ch else { continue };
            let [_, _, ph, pw] = ch.pooled.dims4("sliding_window_forward")?;
            let plane = ph * pw;
            for bi in 0..b {
                for c in 0..k {
                    let off = (bi * k + c) * plane;
                    let map = &ch.pooled.data()[off..off + plane];
                    let pos = argmax_row(map);
                    if map[pos] > agg[bi * k + c] {
                        agg[bi * k + c] = map[pos];
                        argmax[bi * k + c] = (si, pos);
                    }
                }
            }
        }
        let agg = Tensor::from_vec(&[b, k], agg)?;
        let (scores, final_logits) = match self.spec.pool_space {
            PoolSpace::Probabilities => (agg, None),
            PoolSpace::Logits => (softmax_rows(&agg)?, Some(agg)),
        };
        let out = NetOutput {
            scores: scores.clone(),
            channel_outputs: None,
        };
        let cache = ForwardCache {
            kind: CacheKind::Window(WindowCache {
                channels,
                argmax,
                final_logits,
            }),
            batch: b,
            scores,
        };
        Ok((out, cache))
    }

    fn window_backward(&mut self, cache: WindowCache<T>, b: usize, scores: &Tensor<T>, labels: &[usize]) -> Result<T> {
        let (d1_idx, _, d2_idx) = Self::window_head_indices(&self.base)?;
        let k = NUM_CLASSES;
        let (loss, d_agg) = match &cache.final_logits {
            Some(logits) => cross_entropy_with_logits(logits, labels)?,
            None => prob_loss(scores, labels)?,
        };
        for (si, ch) in cache.channels.into_iter().enumerate() {
            let Some(ch) = ch else { continue };
            let [_, _, ph, pw] = ch.pooled.dims4("sliding_window_backward")?;
            let plane = ph * pw;
            let mut d_pooled = vec![T::zero(); b * k * plane];
            let mut touched = false;
            for bi in 0..b {
                for c in 0..k {
                    let (win, pos) = cache.argmax[bi * k + c];
                    if win == si {
                        d_pooled[(bi * k + c) * plane + pos] = d_agg.data()[bi * k + c];
                        touched = true;
                    }
                }
            }
            if !touched {
                continue;
            }
            let d_pooled = Tensor::from_vec(ch.pooled.shape(), d_pooled)?;
            let d_logits = match self.spec.pool_space {
                PoolSpace::Probabilities => softmax_over_channels_backward(&ch.pooled, &d_pooled),
                PoolSpace::Logits => d_pooled,
            };
            let k2 = Self::dense_as_kernel(self.dense_at(d2_idx), ch.hidden.shape()[1])?;
            let (d_hidden, gw2, gb2) = conv2d_backward(&d_logits, Some(&ch.hidden), &k2, 1, 0)?;
            let d_relu = dropout_backward(&d_hidden, ch.mask.as_deref())?;
            let d_pre = relu_backward(&d_relu, Some(&ch.hidden_pre))?;
            let k1 = Self::dense_as_kernel(self.dense_at(d1_idx), ch.features.shape()[1])?;
            let (d_features, gw1, gb1) = conv2d_backward(&d_pre, Some(&ch.features), &k1, 1, 0)?;
            for (idx, gw, gb) in [(d2_idx, gw2, gb2), (d1_idx, gw1, gb1)] {
                if let Layer::Dense(d) = &mut self.base.layers_mut()[idx] {
                    d.weight.accumulate_grad(gw.data())?;
                    d.bias.accumulate_grad(gb.data())?;
                }
            }
            self.base.backward(ch.tape, d_features)?;
        }
        Ok(loss)
    }

    /// Named tensors for a checkpoint: base parameters and batch-norm
    /// statistics, then the mixing layer.
    pub fn checkpoint_entries(&self) -> Vec<Entry> {
        let mut out: Vec<Entry> = self
            .base
            .parameters()
            .into_iter()
            .map(|(name, t)| Entry::from_values(format!("base.{name}"), t.shape(), t.data()))
            .collect();
        for (name, v) in self.base.buffers() {
            out.push(Entry::from_values(format!("base.{name}"), &[v.len()], v));
        }
        if let Some(d) = &self.mixing {
            out.push(Entry::from_values("mixing.weight", d.weight.shape(), d.weight.data()));
            out.push(Entry::from_values("mixing.bias", d.bias.shape(), d.bias.data()));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.checkpoint_entries())
    }

    /// Restores parameters written by [`ChannelNet::save`] for the same
    /// spec; names and shapes must match exactly.
    pub fn load_entries(&mut self, entries: &[Entry]) -> Result<()> {
        let expected = self.checkpoint_entries();
        if expected.len() != entries.len() {
            return Err(Error::format(
                "checkpoint",
                format!("{} tensors, model has {}", entries.len(), expected.len()),
            ));
        }
        for (e, got) in expected.iter().zip(entries) {
            if e.name != got.name || e.shape != got.shape {
                return Err(Error::format(
                    "checkpoint",
                    format!(
                        "found {} {:?}, model expects {} {:?}",
                        got.name, got.shape, e.name, e.shape
                    ),
                ));
            }
        }
        let mut it = entries.iter();
        for t in self.base.parameters_mut() {
            t.data_mut()
                .copy_from_slice(&it.next().expect("checked").values_as::<T>());
        }
        for (_, buf) in self.base.buffers_mut() {
            buf.copy_from_slice(&it.next().expect("checked").values_as::<T>());
        }
        if let Some(d) = self.mixing.as_mut() {
            d.weight
                .data_mut()
                .copy_from_slice(&it.next().expect("checked").values_as::<T>());
            d.bias
                .data_mut()
                .copy_from_slice(&it.next().expect("checked").values_as::<T>());
        }
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let entries = checkpoint::load(path)?;
        self.load_entries(&entries)
    }
}

/// Softmax over the channel axis of `[B, C, H, W]`, independently at each
/// position.
fn softmax_over_channels<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (b, c, plane) = (s[0], s[1], s[2] * s[3]);
    let mut out = x.data().to_vec();
    for bi in 0..b {
        let base = bi * c * plane;
        for p in 0..plane {
            let idx = |ci: usize| base + ci * plane + p;
            let max = (0..c).map(|ci| out[idx(ci)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for ci in 0..c {
                let e = (out[idx(ci)] - max).exp();
                out[idx(ci)] = e;
                total += e;
            }
            for ci in 0..c {
                out[idx(ci)] /= total;
            }
        }
    }
    Tensor::from_vec(s, out).expect("same shape")
}

fn softmax_over_channels_backward<T: Real>(probs: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let s = probs.shape();
    let (b, c, plane) = (s[0], s[1], s[2] * s[3]);
    let (p, g) = (probs.data(), grad.data());
    let mut out = vec![T::zero(); p.len()];
    for bi in 0..b {
        let base = bi * c * plane;
        for pos in 0..plane {
            let idx = |ci: usize| base + ci * plane + pos;
            let dot: T = (0..c).map(|ci| p[idx(ci)] * g[idx(ci)]).sum();
            if dot == T::zero() && (0..c).all(|ci| g[idx(ci)] == T::zero()) {
                continue;
            }
            for ci in 0..c {
                out[idx(ci)] = p[idx(ci)] * (g[idx(ci)] - dot);
            }
        }
    }
    Tensor::from_vec(s, out).expect("same shape")
}
