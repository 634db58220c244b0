use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// He initialization: `N(0, sqrt(2 / fan_in))`.
pub fn he_init<T: Scalar, R: Rng + ?Sized>(shape: [usize; 4], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn moments_and_determinism() {
        let fan_in = 3 * 3 * 3;
        let t: Tensor<f64> = he_init([1000, 1, 1000, 1], fan_in, &mut seeded(42));
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let want = (2.0 / fan_in as f64).sqrt();
        assert!((var.sqrt() - want).abs() < 0.01 * want);
        assert!(mean.abs() < 3.0 * want / n.sqrt());
        let again: Tensor<f64> = he_init([1000, 1, 1000, 1], fan_in, &mut seeded(42));
        assert_eq!(t, again);
    }
}
