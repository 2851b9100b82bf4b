use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

#[derive(Clone, Debug, Default)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState {
                step: 0,
                m: Vec::new(),
                v: Vec::new(),
            },
        }
    }

    /// One bias-corrected update of every parameter from its gradient
    /// buffer. Parameters must be passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], lr: f64) -> Result<()> {
        let st = &mut self.state;
        if st.m.is_empty() {
            st.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            st.v = st.m.clone();
        }
        if st.m.len() != params.len() {
            return Err(Error::shape("adam_step", "parameter count", st.m.len(), params.len()));
        }
        for (i, p) in params.iter().enumerate() {
            if st.m[i].len() != p.numel() {
                return Err(Error::shape("adam_step", "parameter length", st.m[i].len(), p.numel()));
            }
        }
        st.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = st.step as i32;
        let step_size = T::from_f64_lossy(lr / (1.0 - beta1.powi(t)));
        let v_corr = T::from_f64_lossy(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2, eps) = (
            T::from_f64_lossy(beta1),
            T::from_f64_lossy(beta2),
            T::from_f64_lossy(eps),
        );
        for ((p, m), v) in params.iter_mut().zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
            let Some(grad) = p.grad().map(<[T]>::to_vec) else {
                continue;
            };
            for (((w, g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * *g;
                *vi = b2 * *vi + (T::one() - b2) * *g * *g;
                *w -= step_size * *mi / ((*vi * v_corr).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Tensor<f64> {
        Tensor::parameter(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = param(&[1.0, -2.0, 0.5]);
        p.accumulate_grad(&[0.3, -7.0, 1e-3]).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 0.01).unwrap();
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (got, want) in p.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(&[1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut [&mut p], 0.1).unwrap();
        }
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(adam.state.step, 5);
    }

    #[test]
    fn shape_change_is_rejected() {
        let mut p = param(&[1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 0.1).unwrap();
        let mut q = param(&[1.0]);
        assert!(adam.step(&mut [&mut q], 0.1).is_err());
    }

    // Independent scalar simulation of the same recurrence on f(x) = x^2.
    fn simulate(x0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        let mut out = vec![x];
        for t in 1..=steps {
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            out.push(x);
        }
        out
    }

    #[test]
    fn quadratic_converges_and_matches_simulation() {
        let oracle = simulate(1.0, 0.1, 100);
        let mut p = param(&[1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        let mut traj = vec![1.0];
        for _ in 0..100 {
            p.zero_grad();
            let x = p.data()[0];
            p.accumulate_grad(&[2.0 * x]).unwrap();
            adam.step(&mut [&mut p], 0.1).unwrap();
            traj.push(p.data()[0]);
        }
        for (a, b) in traj.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(traj[100].abs() < 0.1, "final {}", traj[100]);
        for w in traj[..10].windows(2) {
            assert!(w[1].abs() < w[0].abs());
        }
        // past the first overshoot the iterate oscillates; its envelope shrinks
        let envelope: Vec<f64> = traj[20..100]
            .chunks(20)
            .map(|c| c.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .collect();
        for w in envelope.windows(2) {
            assert!(w[1] < w[0], "{envelope:?}");
        }
    }
}
