//! 2-D convolution (cross-correlation convention, no kernel flip) lowered to
//! a matrix product through an im2col buffer.

use rand::Rng;
use rayon::prelude::*;

use super::{he_normal, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `floor((size + 2 * padding - kernel) / stride) + 1`, or `None` when the
/// padded input is smaller than the kernel.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn geometry<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: usize,
    op: &'static str,
) -> Result<([usize; 4], usize, Geometry)> {
    let [b, cin, h, w] = input.dims4(op)?;
    let [cout, wcin, kh, kw] = weights.dims4(op)?;
    if wcin != cin {
        return Err(Error::shape(op, "input channels", wcin, cin));
    }
    if kh != kw {
        return Err(Error::shape(op, "kernel width", kh, kw));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument(format!("{op}: stride must be >= 1")));
    }
    let oh = conv_output_size(h, kh, stride, padding)
        .ok_or_else(|| Error::shape(op, "height", format!(">= {}", kh.saturating_sub(2 * padding)), h))?;
    let ow = conv_output_size(w, kw, stride, padding)
        .ok_or_else(|| Error::shape(op, "width", format!(">= {}", kw.saturating_sub(2 * padding)), w))?;
    Ok((
        [b, cin, h, w],
        cout,
        Geometry {
            cin,
            h,
            w,
            k: kh,
            stride,
            padding,
            oh,
            ow,
        },
    ))
}

fn im2col<T: Real>(x: &[T], g: &Geometry, col: &mut [T]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &Geometry, x: &mut [T]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolves `input (B, Cin, H, W)` with `weights (Cout, Cin, k, k)` and adds
/// `bias (Cout)`.
///
/// Output extent per axis is `floor((H + 2 * padding - k) / stride) + 1`.
/// The kernel is not flipped.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let ([b, _, _, _], cout, g) = geometry(input, weights, stride, padding, "conv2d_forward")?;
    if bias.shape() != [cout] {
        return Err(Error::shape(
            "conv2d_forward",
            "bias length",
            cout,
            format!("{:?}", bias.shape()),
        ));
    }
    let (rows, p) = (g.rows(), g.cols());
    let in_stride = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); b * cout * p];
    let wdata = weights.data();
    out.par_chunks_mut(cout * p)
        .zip(input.data().par_chunks(in_stride))
        .for_each(|(dst, x)| {
            let mut col = vec![T::zero(); rows * p];
            im2col(x, &g, &mut col);
            for (co, row) in dst.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = bias.data()[co]);
            }
            T::gemm(
                cout,
                rows,
                p,
                T::one(),
                wdata,
                (rows as isize, 1),
                &col,
                (p as isize, 1),
                T::one(),
                dst,
                (p as isize, 1),
            );
        });
    Tensor::from_vec(&[b, cout, g.oh, g.ow], out)
}

/// Reverse pass of [`conv2d_forward`]: returns `(grad_input, grad_weights,
/// grad_bias)`.
///
/// Per-sample weight gradients are reduced in batch order, so the result
/// does not depend on how the work was scheduled.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: Option<&Tensor<T>>,
    weights: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let input = saved_input.ok_or(Error::MissingActivation {
        op: "conv2d_backward",
        what: "input",
    })?;
    let ([b, cin, h, w], cout, g) = geometry(input, weights, stride, padding, "conv2d_backward")?;
    let expected = [b, cout, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            "grad_out shape",
            format!("{expected:?}"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let (rows, p) = (g.rows(), g.cols());
    let in_stride = cin * h * w;
    let wdata = weights.data();
    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let x = &input.data()[i * in_stride..(i + 1) * in_stride];
            let go = &grad_out.data()[i * cout * p..(i + 1) * cout * p];
            let mut col = vec![T::zero(); rows * p];
            im2col(x, &g, &mut col);
            let mut gw = vec![T::zero(); cout * rows];
            T::gemm(
                cout,
                p,
                rows,
                T::one(),
                go,
                (p as isize, 1),
                &col,
                (1, p as isize),
                T::zero(),
                &mut gw,
                (rows as isize, 1),
            );
            let gb: Vec<T> = go.chunks(p).map(|r| r.iter().copied().sum()).collect();
            // reuse the column buffer for the input-side gradient
            T::gemm(
                rows,
                cout,
                p,
                T::one(),
                wdata,
                (1, rows as isize),
                go,
                (p as isize, 1),
                T::zero(),
                &mut col,
                (p as isize, 1),
            );
            let mut gx = vec![T::zero(); in_stride];
            col2im(&col, &g, &mut gx);
            (gx, gw, gb)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(b * in_stride);
    let mut grad_w = vec![T::zero(); cout * rows];
    let mut grad_b = vec![T::zero(); cout];
    for (gx, gw, gb) in per_sample {
        grad_input.extend_from_slice(&gx);
        grad_w.iter_mut().zip(&gw).for_each(|(d, s)| *d += *s);
        grad_b.iter_mut().zip(&gb).for_each(|(d, s)| *d += *s);
    }
    Ok((
        Tensor::from_vec(&[b, cin, h, w], grad_input)?,
        Tensor::from_vec(weights.shape(), grad_w)?,
        Tensor::from_vec(&[cout], grad_b)?,
    ))
}

/// Convolution layer owning its kernel and bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv2d: kernel {kernel} must be odd and stride {stride} >= 1"
            )));
        }
        let fan_in = in_channels * kernel * kernel;
        let shape = [out_channels, in_channels, kernel, kernel];
        Ok(Conv2d {
            weight: Tensor::parameter(&shape, he_normal(fan_in, shape.iter().product(), rng))?,
            bias: Tensor::parameter(&[out_channels], vec![T::zero(); out_channels])?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(input, &self.weight, &self.bias, self.stride, self.padding)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>, saved_input: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let (gx, gw, gb) = conv2d_backward(grad_out, saved_input, &self.weight, self.stride, self.padding)?;
        self.weight.accumulate_grad(gw.data())?;
        self.bias.accumulate_grad(gb.data())?;
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: &[usize]) -> Tensor<f64> {
        Tensor::full(shape, 1.0)
    }

    #[test]
    fn all_ones_sums_to_nine() {
        let out = conv2d_forward(&ones(&[1, 1, 3, 3]), &ones(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut k = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let x = Tensor::from_vec(&[1, 1, 4, 5], (0..20).map(|v| v as f64 * 0.37 - 2.0).collect()).unwrap();
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y, x);
        let (gx, _, _) = conv2d_backward(&y, Some(&x), &k, 1, 1).unwrap();
        assert_eq!(gx.data(), y.data());
    }

    #[test]
    fn bias_gradient_counts_positions() {
        let x = ones(&[1, 1, 3, 3]);
        let w = ones(&[2, 1, 3, 3]);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[2]), 1, 1).unwrap();
        let (_, _, gb) = conv2d_backward(&Tensor::full(y.shape(), 1.0), Some(&x), &w, 1, 1).unwrap();
        assert_eq!(gb.data(), &[9.0, 9.0]);
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let err = conv2d_forward(&ones(&[1, 2, 5, 5]), &ones(&[1, 3, 3, 3]), &Tensor::zeros(&[1]), 1, 0).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let err = conv2d_forward(&ones(&[1, 1, 2, 5]), &ones(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 0).unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
        let err = conv2d_forward(&ones(&[1, 1, 5, 5]), &ones(&[1, 1, 3, 3]), &Tensor::zeros(&[2]), 1, 0).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }

    #[test]
    fn backward_without_saved_input_fails() {
        let err = conv2d_backward(&ones(&[1, 1, 1, 1]), None, &ones(&[1, 1, 3, 3]), 1, 0).unwrap_err();
        assert!(matches!(err, Error::MissingActivation { .. }));
    }

    #[test]
    fn output_size_formula() {
        assert_eq!(conv_output_size(112, 3, 1, 0), Some(110));
        assert_eq!(conv_output_size(110, 3, 2, 0), Some(54));
        assert_eq!(conv_output_size(8, 3, 2, 1), Some(4));
        assert_eq!(conv_output_size(2, 3, 1, 0), None);
    }
}
