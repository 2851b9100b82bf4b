use rand::Rng;

use super::{Mode, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Passes the gradient where the saved input was strictly positive.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, saved_input: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let input = saved_input.ok_or(Error::MissingActivation {
        op: "relu_backward",
        what: "input",
    })?;
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            "shape",
            format!("{:?}", input.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Inverted dropout. In training mode each element survives with
/// probability `1 - rate` and survivors are scaled by `1 / (1 - rate)`;
/// the returned mask holds those per-element factors. Eval mode is the
/// identity and returns no mask.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.numel())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) => {
            if m.len() != grad_out.numel() {
                return Err(Error::shape(
                    "dropout_backward",
                    "mask length",
                    grad_out.numel(),
                    m.len(),
                ));
            }
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(grad_out.shape(), data)
        }
    }
}

/// Row-wise softmax of a `(B, C)` tensor, shifted by the row maximum.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c] = logits.dims2("softmax")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Gradient with respect to the logits given the softmax output and the
/// gradient with respect to that output.
pub fn softmax_backward<T: Real>(probs: &Tensor<T>, grad_probs: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c] = probs.dims2("softmax_backward")?;
    if probs.shape() != grad_probs.shape() {
        return Err(Error::shape(
            "softmax_backward",
            "shape",
            format!("{:?}", probs.shape()),
            format!("{:?}", grad_probs.shape()),
        ));
    }
    let mut out = vec![T::zero(); probs.numel()];
    for ((p, g), o) in probs
        .data()
        .chunks(c)
        .zip(grad_probs.data().chunks(c))
        .zip(out.chunks_mut(c))
    {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for i in 0..c {
            o[i] = p[i] * (g[i] - dot);
        }
    }
    Tensor::from_vec(probs.shape(), out)
}

/// Mean cross-entropy of `(B, C)` logits against integer labels, computed
/// through log-sum-exp. Returns the loss and its gradient w.r.t. the logits.
pub fn cross_entropy_with_logits<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [b, c] = logits.dims2("cross_entropy")?;
    if labels.len() != b {
        return Err(Error::shape("cross_entropy", "label count", b, labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let probs = softmax_rows(logits)?;
    let scale = T::one() / T::from_usize(b).unwrap();
    let mut loss = T::zero();
    let mut grad = probs.data().to_vec();
    for (i, (row, &y)) in logits.data().chunks(c).zip(labels).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[y];
        grad[i * c + y] -= T::one();
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, Tensor::from_vec(&[b, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_cases() {
        let x = Tensor::from_vec(&[4], vec![-2.0f64, 0.0, 0.5, 3.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 0.5, 3.0]);
        let g = relu_backward(&Tensor::full(&[4], 1.0), Some(&x)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn uniform_logits_give_tenth() {
        let p = softmax_rows(&Tensor::<f64>::full(&[2, 10], 3.7)).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax_rows(&Tensor::from_vec(&[1, 3], vec![1000.0f32, 0.0, -1000.0]).unwrap()).unwrap();
        assert!(p.all_finite());
        assert!((p.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let err = cross_entropy_with_logits(&Tensor::<f64>::zeros(&[1, 10]), &[10]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 10, classes: 10 }));
    }

    #[test]
    fn cross_entropy_of_uniform_is_ln_c() {
        let (loss, _) = cross_entropy_with_logits(&Tensor::<f64>::zeros(&[3, 10]), &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn dropout_scaling_and_eval_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::full(&[1000], 1.0);
        let (y, mask) = dropout_forward(&x, 0.25, Mode::Train, &mut rng).unwrap();
        let mask = mask.unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((700..800).contains(&kept), "kept {kept}");
        let (z, none) = dropout_forward(&x, 0.25, Mode::Eval, &mut rng).unwrap();
        assert_eq!(z, x);
        assert!(none.is_none());
        assert!(dropout_forward(&x, 1.0, Mode::Train, &mut rng).is_err());
    }
}
