//! 3×3 same-padded convolution and 4×4 stride-2 transposed convolution,
//! lowered to GEMM via im2col.
//!
//! Samples are processed in parallel; parameter gradients are reduced over
//! samples in index order so results do not depend on the thread count.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CONV_K: usize = 3;
pub const UP_K: usize = 4;
pub const UP_STRIDE: usize = 2;

/// Upper bound on im2col buffer elements per strip.
const STRIP_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn source(&self, o: usize, kk: usize, limit: usize) -> Option<usize> {
        (o * self.stride + kk).checked_sub(self.pad).filter(|&i| i < limit)
    }
}

/// Fills `cols` (rows × (out rows y0..y1 · out_w)) from `src` (C×H×W).
fn im2col<T: Scalar>(src: &[T], g: &Geometry, y0: usize, y1: usize, cols: &mut [T]) {
    let span = (y1 - y0) * g.out_w;
    for c in 0..g.channels {
        let plane = &src[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * span..(row + 1) * span];
                for oy in y0..y1 {
                    let line = &mut dst[(oy - y0) * g.out_w..(oy - y0 + 1) * g.out_w];
                    match g.source(oy, ky, g.height) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match g.source(ox, kx, g.width) {
                                    Some(ix) => plane[iy * g.width + ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `dst`.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, y0: usize, y1: usize, dst: &mut [T]) {
    let span = (y1 - y0) * g.out_w;
    for c in 0..g.channels {
        let plane = &mut dst[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * span..(row + 1) * span];
                for oy in y0..y1 {
                    let Some(iy) = g.source(oy, ky, g.height) else { continue };
                    let line = &src[(oy - y0) * g.out_w..(oy - y0 + 1) * g.out_w];
                    for (ox, &v) in line.iter().enumerate() {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            plane[iy * g.width + ix] = plane[iy * g.width + ix] + v;
                        }
                    }
                }
            }
        }
    }
}

fn strips(g: &Geometry, budget: usize) -> Vec<(usize, usize)> {
    let step = (budget / (g.rows() * g.out_w).max(1)).clamp(1, g.out_h);
    (0..g.out_h).step_by(step).map(|y0| (y0, (y0 + step).min(g.out_h))).collect()
}

/// Gradients of a layer with weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub d_input: Tensor<T>,
    pub d_weight: Vec<T>,
    pub d_bias: Vec<T>,
}

fn check_conv<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<()> {
    let [k, c, kh, kw] = weight.shape();
    if (kh, kw) != (CONV_K, CONV_K) {
        return Err(Error::shape("conv2d", format!("filters must be 3x3, got {kh}x{kw}")));
    }
    if c != input.channels() {
        return Err(Error::shape("conv2d", format!("input has {} channels, filters expect {c}", input.channels())));
    }
    if bias.len() != k {
        return Err(Error::shape("conv2d", format!("{k} filters but {} biases", bias.len())));
    }
    Ok(())
}

fn conv_geometry<T: Scalar>(input: &Tensor<T>) -> Geometry {
    let [_, c, h, w] = input.shape();
    Geometry { channels: c, height: h, width: w, k: CONV_K, stride: 1, pad: 1, out_h: h, out_w: w }
}

/// Stride 1, zero padding 1: output keeps the input's spatial size.
/// `weight` is `(K, C, 3, 3)`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    conv2d_strips(input, weight, bias, STRIP_BUDGET)
}

fn conv2d_strips<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T], budget: usize) -> Result<Tensor<T>> {
    check_conv(input, weight, bias)?;
    let g = conv_geometry(input);
    let k = weight.batch();
    let [n, _, h, w] = input.shape();
    let plane = h * w;
    let mut out = Tensor::zeros([n, k, h, w]);
    let strips = strips(&g, budget);
    let outputs: Vec<(usize, usize, usize, Vec<T>)> = (0..n)
        .flat_map(|s| strips.iter().map(move |&(y0, y1)| (s, y0, y1)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, y0, y1)| {
            let span = (y1 - y0) * w;
            let mut cols = vec![T::zero(); g.rows() * span];
            im2col(input.sample(s), &g, y0, y1, &mut cols);
            let mut res = vec![T::zero(); k * span];
            T::gemm(k, g.rows(), span, weight.data(), false, &cols, false, &mut res, false);
            (s, y0, y1, res)
        })
        .collect();
    let data = out.data_mut();
    for (s, y0, y1, res) in outputs {
        let span = (y1 - y0) * w;
        for f in 0..k {
            let dst = &mut data[(s * k + f) * plane + y0 * w..(s * k + f) * plane + y1 * w];
            for (d, &r) in dst.iter_mut().zip(&res[f * span..(f + 1) * span]) {
                *d = r + bias[f];
            }
        }
    }
    Ok(out)
}

fn sum_bias_grad<T: Scalar>(d_out: &Tensor<T>) -> Vec<T> {
    let [n, k, h, w] = d_out.shape();
    let plane = h * w;
    let mut d_bias = vec![T::zero(); k];
    for s in 0..n {
        for (f, db) in d_bias.iter_mut().enumerate() {
            let start = (s * k + f) * plane;
            *db = *db + d_out.data()[start..start + plane].iter().copied().sum::<T>();
        }
    }
    d_bias
}

fn reduce_in_order<T: Scalar>(parts: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut total = vec![T::zero(); len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t = *t + v;
        }
    }
    total
}

pub fn conv2d_backward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, d_out: &Tensor<T>) -> Result<LayerGrads<T>> {
    let k = weight.batch();
    check_conv(input, weight, &vec![T::zero(); k])?;
    let [n, c, h, w] = input.shape();
    if d_out.shape() != [n, k, h, w] {
        return Err(Error::shape("conv2d_backward", format!("d_out {:?}, expected {:?}", d_out.shape(), [n, k, h, w])));
    }
    let g = conv_geometry(input);
    let plane = h * w;
    let strips = strips(&g, STRIP_BUDGET);
    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut d_w = vec![T::zero(); weight.len()];
            let mut d_in = vec![T::zero(); c * plane];
            let dout = d_out.sample(s);
            for &(y0, y1) in &strips {
                let span = (y1 - y0) * w;
                let mut dstrip = vec![T::zero(); k * span];
                for f in 0..k {
                    dstrip[f * span..(f + 1) * span].copy_from_slice(&dout[f * plane + y0 * w..f * plane + y1 * w]);
                }
                let mut cols = vec![T::zero(); g.rows() * span];
                im2col(input.sample(s), &g, y0, y1, &mut cols);
                T::gemm(k, span, g.rows(), &dstrip, false, &cols, true, &mut d_w, true);
                let mut d_cols = vec![T::zero(); g.rows() * span];
                T::gemm(g.rows(), k, span, weight.data(), true, &dstrip, false, &mut d_cols, false);
                col2im(&d_cols, &g, y0, y1, &mut d_in);
            }
            (d_w, d_in)
        })
        .collect();
    let mut d_input = Vec::with_capacity(input.len());
    let mut weights = Vec::with_capacity(n);
    for (d_w, d_in) in per_sample {
        d_input.extend(d_in);
        weights.push(d_w);
    }
    Ok(LayerGrads {
        d_input: Tensor::new(input.shape(), d_input)?,
        d_weight: reduce_in_order(weights, weight.len()),
        d_bias: sum_bias_grad(d_out),
    })
}

fn check_up<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<()> {
    let [c, k, kh, kw] = weight.shape();
    if (kh, kw) != (UP_K, UP_K) {
        return Err(Error::shape("transposed_conv2d", format!("filters must be 4x4, got {kh}x{kw}")));
    }
    if c != input.channels() {
        return Err(Error::shape(
            "transposed_conv2d",
            format!("input has {} channels, filters expect {c}", input.channels()),
        ));
    }
    if bias.len() != k {
        return Err(Error::shape("transposed_conv2d", format!("{k} outputs but {} biases", bias.len())));
    }
    Ok(())
}

/// Geometry of the output grid seen as the "input" of the adjoint conv.
fn up_geometry(k: usize, h: usize, w: usize) -> Geometry {
    Geometry { channels: k, height: 2 * h, width: 2 * w, k: UP_K, stride: UP_STRIDE, pad: 1, out_h: h, out_w: w }
}

/// Kernel 4, stride 2, padding 1: exactly doubles height and width.
/// `weight` is `(C_in, K_out, 4, 4)`.
pub fn transposed_conv2d<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    check_up(input, weight, bias)?;
    let [n, c, h, w] = input.shape();
    let k = weight.shape()[1];
    let g = up_geometry(k, h, w);
    let out_plane = 4 * h * w;
    let samples: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut cols = vec![T::zero(); g.rows() * h * w];
            T::gemm(g.rows(), c, h * w, weight.data(), true, input.sample(s), false, &mut cols, false);
            let mut out = vec![T::zero(); k * out_plane];
            col2im(&cols, &g, 0, h, &mut out);
            for (f, chunk) in out.chunks_exact_mut(out_plane).enumerate() {
                for v in chunk {
                    *v = *v + bias[f];
                }
            }
            out
        })
        .collect();
    Tensor::new([n, k, 2 * h, 2 * w], samples.concat())
}

pub fn transposed_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let k = weight.shape()[1];
    check_up(input, weight, &vec![T::zero(); k])?;
    let [n, c, h, w] = input.shape();
    if d_out.shape() != [n, k, 2 * h, 2 * w] {
        return Err(Error::shape(
            "transposed_conv2d_backward",
            format!("d_out {:?}, expected {:?}", d_out.shape(), [n, k, 2 * h, 2 * w]),
        ));
    }
    let g = up_geometry(k, h, w);
    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut d_cols = vec![T::zero(); g.rows() * h * w];
            im2col(d_out.sample(s), &g, 0, h, &mut d_cols);
            let mut d_in = vec![T::zero(); c * h * w];
            T::gemm(c, g.rows(), h * w, weight.data(), false, &d_cols, false, &mut d_in, false);
            let mut d_w = vec![T::zero(); weight.len()];
            T::gemm(c, h * w, g.rows(), input.sample(s), false, &d_cols, true, &mut d_w, false);
            (d_w, d_in)
        })
        .collect();
    let mut d_input = Vec::with_capacity(input.len());
    let mut weights = Vec::with_capacity(n);
    for (d_w, d_in) in per_sample {
        d_input.extend(d_in);
        weights.push(d_w);
    }
    Ok(LayerGrads {
        d_input: Tensor::new(input.shape(), d_input)?,
        d_weight: reduce_in_order(weights, weight.len()),
        d_bias: sum_bias_grad(d_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as an independent reference.
    fn direct_conv(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
        let [n, c, h, w] = input.shape();
        let k = weight.batch();
        let mut out = Tensor::zeros([n, k, h, w]);
        let data = out.data_mut();
        for s in 0..n {
            for f in 0..k {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias[f];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (iy, ix) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += weight.at(f, ci, ky, kx) * input.at(s, ci, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        data[((s * k + f) * h + y) * w + x] = acc;
                    }
                }
            }
        }
        out
    }

    fn direct_up(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
        let [n, c, h, w] = input.shape();
        let k = weight.shape()[1];
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros([n, k, oh, ow]);
        let data = out.data_mut();
        for s in 0..n {
            for f in 0..k {
                for v in &mut data[(s * k + f) * oh * ow..(s * k + f + 1) * oh * ow] {
                    *v = bias[f];
                }
                for ci in 0..c {
                    for iy in 0..h {
                        for ix in 0..w {
                            for ky in 0..4 {
                                for kx in 0..4 {
                                    let oy = (2 * iy + ky) as isize - 1;
                                    let ox = (2 * ix + kx) as isize - 1;
                                    if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                        data[((s * k + f) * oh + oy as usize) * ow + ox as usize] +=
                                            weight.at(ci, f, ky, kx) * input.at(s, ci, iy, ix);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn pseudo(shape: [usize; 4], seed: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| ((i as f64 + 1.0) * seed).sin())
    }

    #[test]
    fn ones_filter_counts_neighbours() {
        let input = Tensor::filled([1, 1, 4, 5], 2.0);
        let weight = Tensor::filled([1, 1, 3, 3], 1.0);
        let out = conv2d(&input, &weight, &[0.0]).unwrap();
        assert_eq!(out.at(0, 0, 1, 1), 18.0);
        assert_eq!(out.at(0, 0, 0, 2), 12.0);
        assert_eq!(out.at(0, 0, 0, 0), 8.0);
        assert_eq!(out.at(0, 0, 3, 4), 8.0);
    }

    #[test]
    fn identity_filter() {
        let input = pseudo([2, 1, 5, 4], 0.7);
        let mut weight = Tensor::zeros([1, 1, 3, 3]);
        weight.data_mut()[4] = 1.0;
        assert_eq!(conv2d(&input, &weight, &[0.0]).unwrap(), input);
    }

    #[test]
    fn conv_matches_direct_loops() {
        let input = pseudo([2, 3, 6, 5], 0.37);
        let weight = pseudo([4, 3, 3, 3], 1.13);
        let bias = [0.1, -0.2, 0.3, 0.0];
        let fast = conv2d(&input, &weight, &bias).unwrap();
        let slow = direct_conv(&input, &weight, &bias);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_matches_direct_loops() {
        let input = pseudo([2, 3, 3, 4], 0.91);
        let weight = pseudo([3, 2, 4, 4], 0.29);
        let bias = [0.5, -1.0];
        let fast = transposed_conv2d(&input, &weight, &bias).unwrap();
        assert_eq!(fast.shape(), [2, 2, 6, 8]);
        let slow = direct_up(&input, &weight, &bias);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_of_zero_is_bias() {
        let out =
            transposed_conv2d(&Tensor::zeros([1, 2, 3, 3]), &pseudo([2, 3, 4, 4], 0.5), &[1.0, 2.0, 3.0]).unwrap();
        for f in 0..3 {
            for y in 0..6 {
                for x in 0..6 {
                    assert_eq!(out.at(0, f, y, x), (f + 1) as f64);
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let input = Tensor::<f64>::zeros([1, 2, 4, 4]);
        assert!(conv2d(&input, &Tensor::zeros([1, 3, 3, 3]), &[0.0]).is_err());
        assert!(conv2d(&input, &Tensor::zeros([1, 2, 3, 3]), &[0.0, 1.0]).is_err());
        assert!(transposed_conv2d(&input, &Tensor::zeros([3, 1, 4, 4]), &[0.0]).is_err());
    }

    #[test]
    fn strips_cover_large_images() {
        let input = pseudo([2, 4, 9, 7], 0.013);
        let weight = pseudo([2, 4, 3, 3], 0.071);
        let budget = 36 * 7 * 2;
        assert_eq!(strips(&conv_geometry(&input), budget).len(), 5);
        let fast = conv2d_strips(&input, &weight, &[0.0, 0.0], budget).unwrap();
        let slow = direct_conv(&input, &weight, &[0.0, 0.0]);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
