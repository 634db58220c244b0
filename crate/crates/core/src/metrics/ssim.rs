//! Single- and multi-scale structural similarity on luminance maps.

use crate::error::{Error, Result};
use crate::image::LumaMap;
use crate::scalar::Scalar;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
/// Per-scale exponents, finest first.
pub const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn gaussian_1d() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter keeping only windows fully inside the image.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&row[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean luminance term and mean contrast-structure term.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize, range: f64) -> (f64, f64, f64) {
    let k = gaussian_1d();
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<f64>>();
    let (mu_a, ow, oh) = filter_valid(a, w, h, &k);
    let (mu_b, _, _) = filter_valid(b, w, h, &k);
    let (aa, _, _) = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let (bb, _, _) = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let (ab, _, _) = filter_valid(&prod(|x, y| x * y), w, h, &k);
    let n = (ow * oh) as f64;
    let (mut l_sum, mut cs_sum, mut s_sum) = (0.0, 0.0, 0.0);
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        l_sum += l;
        cs_sum += cs;
        s_sum += l * cs;
    }
    (l_sum / n, cs_sum / n, s_sum / n)
}

fn check_pair<T: Scalar>(a: &LumaMap<T>, b: &LumaMap<T>) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.width(), a.height()),
            found: format!("{}x{}", b.width(), b.height()),
        });
    }
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(Error::InvalidImage(format!(
            "{}x{} is smaller than the {WINDOW}x{WINDOW} window",
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

fn to_f64<T: Scalar>(m: &LumaMap<T>) -> Vec<f64> {
    m.data().iter().map(|v| v.f64()).collect()
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows.
pub fn ssim<T: Scalar>(a: &LumaMap<T>, b: &LumaMap<T>, dynamic_range: f64) -> Result<f64> {
    check_pair(a, b)?;
    Ok(ssim_terms(&to_f64(a), &to_f64(b), a.width(), a.height(), dynamic_range).2)
}

/// 2x2 box average followed by decimation; an odd last row or column is
/// dropped.
pub fn downsample(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (data[i] + data[i + 1] + data[i + w] + data[i + w + 1]));
        }
    }
    (out, ow, oh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsSsim {
    pub score: f64,
    /// Contrast-structure term per scale, finest first; the last entry is the
    /// full SSIM of the coarsest scale.
    pub per_scale: Vec<f64>,
    /// Exponents actually used.
    pub weights: Vec<f64>,
    /// Fewer than five scales fit the image.
    pub reduced: bool,
}

/// Number of dyadic scales whose coarsest level still holds one window.
pub fn scales_for(width: usize, height: usize) -> usize {
    let mut n = 0;
    let (mut w, mut h) = (width, height);
    while n < MS_WEIGHTS.len() && w >= WINDOW && h >= WINDOW {
        n += 1;
        w /= 2;
        h /= 2;
    }
    n
}

/// Multi-scale SSIM. Images too small for five scales use as many as fit,
/// with the leading exponents renormalized to sum to one.
pub fn ms_ssim_detailed<T: Scalar>(a: &LumaMap<T>, b: &LumaMap<T>, dynamic_range: f64) -> Result<MsSsim> {
    check_pair(a, b)?;
    let m = scales_for(a.width(), a.height());
    let total: f64 = MS_WEIGHTS[..m].iter().sum();
    let weights: Vec<f64> = MS_WEIGHTS[..m].iter().map(|w| w / total).collect();
    let (mut da, mut db) = (to_f64(a), to_f64(b));
    let (mut w, mut h) = (a.width(), a.height());
    let mut per_scale = Vec::with_capacity(m);
    let mut score = 1.0;
    for (j, wj) in weights.iter().enumerate() {
        let (l, cs, _) = ssim_terms(&da, &db, w, h, dynamic_range);
        let term = if j + 1 == m { l.max(0.0) * cs.max(0.0) } else { cs.max(0.0) };
        per_scale.push(term);
        score *= term.powf(*wj);
        if j + 1 < m {
            let (na, nw, nh) = downsample(&da, w, h);
            da = na;
            db = downsample(&db, w, h).0;
            (w, h) = (nw, nh);
        }
    }
    Ok(MsSsim { score, per_scale, weights, reduced: m < MS_WEIGHTS.len() })
}

pub fn ms_ssim<T: Scalar>(a: &LumaMap<T>, b: &LumaMap<T>, dynamic_range: f64) -> Result<f64> {
    Ok(ms_ssim_detailed(a, b, dynamic_range)?.score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> LumaMap<f64> {
        LumaMap::new(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect()).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let a = map(40, 30, |x, y| ((x * 7 + y * 3) % 17) as f64 * 9.0);
        assert!((ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ms_ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_pair_matches_closed_form() {
        let a = map(16, 16, |_, _| 100.0);
        let b = map(16, 16, |_, _| 110.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let want = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        assert!((want - 0.995476).abs() < 1e-6);
        assert!((ssim(&a, &b, 255.0).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn scale_count_and_errors() {
        assert_eq!(scales_for(64, 64), 3);
        assert_eq!(scales_for(176, 176), 5);
        assert_eq!(scales_for(10, 64), 0);
        let a = map(10, 10, |_, _| 1.0);
        assert!(ssim(&a, &a, 1.0).is_err());
        let b = map(12, 12, |_, _| 1.0);
        assert!(ssim(&b, &map(13, 12, |_, _| 1.0), 1.0).is_err());
        let r = ms_ssim_detailed(&map(64, 64, |x, _| x as f64), &map(64, 64, |x, _| x as f64), 255.0).unwrap();
        assert!(r.reduced);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn downsample_averages_blocks() {
        let (d, w, h) = downsample(&[1.0, 3.0, 9.0, 5.0, 7.0, 9.0], 3, 2);
        assert_eq!((w, h), (1, 1));
        assert_eq!(d, vec![4.0]);
    }
}
