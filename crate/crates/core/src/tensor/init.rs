use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Zero-mean normal samples with standard deviation `sqrt(2 / fan_in)`.
pub fn he_normal<T: Real, R: Rng + ?Sized>(fan_in: usize, count: usize, rng: &mut R) -> Vec<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    (0..count)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::from_f64_lossy(z * std)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn std_follows_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = he_normal(50, 200_000, &mut rng);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 2e-3);
        assert!((var - 2.0 / 50.0).abs() < 1e-3, "var {var}");
    }
}
