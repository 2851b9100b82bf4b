use rand::Rng;

use super::{he_normal, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn flat_rows<T: Real>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match x.shape() {
        [] => Err(Error::shape("dense", "rank", ">= 1", 0)),
        [b, rest @ ..] => Ok((*b, rest.iter().product())),
    }
}

/// `y = x * W^T + b` with `x` flattened to `(B, in_features)` and
/// `W (out_features, in_features)`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, fin) = flat_rows(input)?;
    let [fout, win] = weight.dims2("dense_forward")?;
    if win != fin {
        return Err(Error::shape("dense_forward", "input features", win, fin));
    }
    if bias.shape() != [fout] {
        return Err(Error::shape(
            "dense_forward",
            "bias length",
            fout,
            format!("{:?}", bias.shape()),
        ));
    }
    let mut out = Vec::with_capacity(b * fout);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        b,
        fin,
        fout,
        T::one(),
        input.data(),
        (fin as isize, 1),
        weight.data(),
        (1, fin as isize),
        T::one(),
        &mut out,
        (fout as isize, 1),
    );
    Tensor::from_vec(&[b, fout], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`; `grad_input` has the
/// (unflattened) shape of `saved_input`.
pub fn dense_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: Option<&Tensor<T>>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let input = saved_input.ok_or(Error::MissingActivation {
        op: "dense_backward",
        what: "input",
    })?;
    let (b, fin) = flat_rows(input)?;
    let [fout, _] = weight.dims2("dense_backward")?;
    if grad_out.shape() != [b, fout] {
        return Err(Error::shape(
            "dense_backward",
            "grad_out shape",
            format!("[{b}, {fout}]"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let mut gx = vec![T::zero(); b * fin];
    T::gemm(
        b,
        fout,
        fin,
        T::one(),
        grad_out.data(),
        (fout as isize, 1),
        weight.data(),
        (fin as isize, 1),
        T::zero(),
        &mut gx,
        (fin as isize, 1),
    );
    let mut gw = vec![T::zero(); fout * fin];
    T::gemm(
        fout,
        b,
        fin,
        T::one(),
        grad_out.data(),
        (1, fout as isize),
        input.data(),
        (fin as isize, 1),
        T::zero(),
        &mut gw,
        (fin as isize, 1),
    );
    let mut gb = vec![T::zero(); fout];
    for row in grad_out.data().chunks(fout) {
        gb.iter_mut().zip(row).for_each(|(d, s)| *d += *s);
    }
    Ok((
        Tensor::from_vec(input.shape(), gx)?,
        Tensor::from_vec(&[fout, fin], gw)?,
        Tensor::from_vec(&[fout], gb)?,
    ))
}

/// Fully connected layer. Inputs of any rank are flattened past the batch
/// axis, so a `(B, C, h, w)` feature map feeds it directly.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Result<Self> {
        Ok(Dense {
            weight: Tensor::parameter(
                &[out_features, in_features],
                he_normal(in_features, in_features * out_features, rng),
            )?,
            bias: Tensor::parameter(&[out_features], vec![T::zero(); out_features])?,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        dense_forward(input, &self.weight, &self.bias)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, saved_input: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let (gx, gw, gb) = dense_backward(grad_out, saved_input, &self.weight)?;
        self.weight.accumulate_grad(gw.data())?;
        self.bias.accumulate_grad(gb.data())?;
        Ok(gx)
    }
}
