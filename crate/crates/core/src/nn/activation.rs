use super::tensor::{same_shape, Tensor};
use crate::error::Result;
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient at exactly zero is taken as 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("relu_backward", input, d_out)?;
    let data =
        input.data().iter().zip(d_out.data()).map(|(&x, &g)| if x > T::zero() { g } else { T::zero() }).collect();
    Tensor::new(input.shape(), data)
}

#[inline]
fn logistic<T: Scalar>(v: T) -> T {
    // split by sign so exp never overflows
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(logistic)
}

/// Takes the forward *output* `s`: `ds = s (1 - s) · d_out`.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("sigmoid_backward", output, d_out)?;
    let data = output.data().iter().zip(d_out.data()).map(|(&s, &g)| s * (T::one() - s) * g).collect();
    Tensor::new(output.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        let t = Tensor::new([1, 1, 1, 3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let s = sigmoid(&t);
        assert_eq!(s.data()[1], 0.5);
        let g = relu_backward(&t, &Tensor::filled(t.shape(), 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        let t = Tensor::new([1, 1, 1, 2], vec![-800.0f64, 800.0]).unwrap();
        let s = sigmoid(&t);
        assert_eq!(s.data(), &[0.0, 1.0]);
        assert!(s.data().iter().all(|v| v.is_finite()));
    }
}
