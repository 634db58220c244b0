use super::tensor::{same_shape, Tensor};
use crate::error::Result;
use crate::scalar::Scalar;

/// Mean squared error over every element, with its gradient
/// `2 (pred - target) / n`. The loss is accumulated in `f64`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape("mse_loss", pred, target)?;
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let scale = T::of(2.0 / n);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.f64() * d.f64();
            scale * d
        })
        .collect();
    Ok((sum / n, Tensor::new(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let a = Tensor::from_fn([1, 3, 2, 2], |i| i as f64 * 0.1);
        let (l, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let b = a.map(|v| v + 1.0);
        let (l, _) = mse_loss(&b, &a).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!(mse_loss(&a, &Tensor::zeros([1, 3, 2, 1])).is_err());
    }
}
