use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2×2 max pooling with stride 2.
///
/// Returns the pooled tensor and, per output element, the flat input index
/// of the winning element. Ties go to the first element in row-major order.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("maxpool2", format!("spatial size {h}x{w} is not even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new([n, c, oh, ow], out)?, argmax))
}

/// Routes each upstream gradient to its window's winning input element.
pub fn maxpool2_backward<T: Scalar>(input_shape: [usize; 4], argmax: &[usize], d_out: &Tensor<T>) -> Result<Tensor<T>> {
    if d_out.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool2_backward",
            format!("{} gradients for {} windows", d_out.len(), argmax.len()),
        ));
    }
    let mut d_in = Tensor::zeros(input_shape);
    let data = d_in.data_mut();
    for (&i, &g) in argmax.iter().zip(d_out.data()) {
        data[i] = data[i] + g;
    }
    Ok(d_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum() {
        let t = Tensor::new([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (p, arg) = maxpool2(&t).unwrap();
        assert_eq!(p.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn ties_go_to_first_element() {
        let t = Tensor::filled([2, 3, 4, 6], 1.5f64);
        let (p, arg) = maxpool2(&t).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.5));
        for (k, &i) in arg.iter().enumerate() {
            let (plane, rest) = (k / 6, k % 6);
            let (oy, ox) = (rest / 3, rest % 3);
            assert_eq!(i, plane * 24 + 2 * oy * 6 + 2 * ox);
        }
    }

    #[test]
    fn backward_routes_one_element_per_window() {
        let t = Tensor::from_fn([2, 2, 4, 4], |i| ((i * 7919) % 31) as f64);
        let (p, arg) = maxpool2(&t).unwrap();
        let d = maxpool2_backward(t.shape(), &arg, &Tensor::filled(p.shape(), 1.0)).unwrap();
        let nonzero = d.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, t.len() / 4);
        assert!(d.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn odd_sizes_rejected() {
        assert!(maxpool2(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
    }
}
