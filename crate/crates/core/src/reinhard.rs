//! Reinhard's global operator, its exact inverse, and recovery of the
//! log-average luminance from a tone-mapped image alone.
//!
//! All curve math runs in `f64` regardless of the storage scalar.

use crate::error::{Error, Result};
use crate::image::{geometric_mean, luminance, rescale_colors, LdrImage, LumaMap, RadianceMap};
use crate::scalar::Scalar;

/// Key value mapping the log-average luminance to middle gray.
pub const DEFAULT_KEY: f64 = 0.18;

/// Headroom kept below white before inversion: half an 8-bit step.
pub const SATURATION_DELTA: f64 = 1.0 / 512.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneParams {
    /// Key value, `0 < a <= 1`.
    pub a: f64,
    /// Log-average luminance of the HDR source.
    pub g: f64,
    pub eps: f64,
}

impl ToneParams {
    pub fn new(a: f64, g: f64, eps: f64) -> Result<Self> {
        check_key(a)?;
        check_positive("g", g)?;
        check_positive("eps", eps)?;
        Ok(ToneParams { a, g, eps })
    }

    /// Per-pixel scale `a / G` applied to luminance.
    pub fn exposure(&self) -> f64 {
        self.a / self.g
    }
}

/// Pixel counts of the zero / non-zero split used by scale recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPartition {
    pub n_total: usize,
    pub n_zero: usize,
    pub n_nonzero: usize,
}

pub(crate) fn check_key(a: f64) -> Result<()> {
    if a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "a", value: a, reason: "key value must lie in (0, 1]" })
    }
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value: v, reason: "must be positive and finite" })
    }
}

/// `X / (1 + X)`.
#[inline]
pub fn forward_curve(x: f64) -> f64 {
    x / (1.0 + x)
}

/// `I / (1 - I)` for `0 <= I < 1`.
#[inline]
pub fn inverse_curve(i: f64) -> Result<f64> {
    if (0.0..1.0).contains(&i) {
        Ok(i / (1.0 - i))
    } else {
        Err(Error::CurveDomain(i))
    }
}

/// Saturation guard applied to luminance before inversion.
///
/// Quantized images have every value at or above `1 - δ` pulled down to
/// `1 - δ`, so 8-bit white stays finite. Continuous images are only touched
/// where the curve itself diverges (`I >= 1`).
#[inline]
pub fn guard_luma(l: f64, quantized: bool) -> f64 {
    if quantized || l >= 1.0 {
        l.min(1.0 - SATURATION_DELTA)
    } else {
        l
    }
}

/// Tone-maps `hdr` with key `a`, returning the display image and the
/// parameters used. Colors keep the source channel ratios; the output is
/// continuous (not quantized).
pub fn tonemap_forward<T: Scalar>(hdr: &RadianceMap<T>, a: f64, eps: f64) -> Result<(LdrImage<T>, ToneParams)> {
    check_key(a)?;
    check_positive("eps", eps)?;
    let luma = luminance(hdr).cast::<f64>();
    let params = ToneParams::new(a, geometric_mean(&luma, eps), eps)?;
    let scale = params.exposure();
    let mapped = luma.map_unchecked(|l| forward_curve(scale * l));
    let ldr = rescale_colors(hdr, &luma, &mapped)?;
    Ok((ldr, params))
}

/// Recovers the HDR log-average `G` from the luminance of a Reinhard-mapped
/// image and the key value alone.
///
/// Needs at least one pixel that is exactly zero: with none, the image
/// carries no information about absolute scale.
pub fn recover_g<T: Scalar>(mapped_luma: &LumaMap<T>, a: f64, eps: f64) -> Result<(f64, ZeroPartition)> {
    check_key(a)?;
    check_positive("eps", eps)?;
    let n_total = mapped_luma.len();
    let n_zero = mapped_luma.data().iter().filter(|v| **v == T::zero()).count();
    let part = ZeroPartition { n_total, n_zero, n_nonzero: n_total - n_zero };
    if n_zero == 0 {
        return Err(Error::ScaleUnrecoverable { n_total });
    }
    let mut log_sum = 0.0;
    for v in mapped_luma.data() {
        log_sum += inverse_curve(v.f64())?.max(eps).ln();
    }
    let log_gx = log_sum / n_total as f64;
    let (n, nz, nnz) = (n_total as f64, n_zero as f64, part.n_nonzero as f64);
    let log_g = (n / nz) * log_gx - (nnz / nz) * a.ln();
    let g = log_g.exp();
    if !g.is_normal() {
        return Err(Error::ScaleDegenerate { n_zero, n_total, log_g });
    }
    Ok((g, part))
}

/// Reconstructs an HDR image from a Reinhard-mapped image.
///
/// `G` is recovered from the image unless `g_override` is given.
pub fn inverse_tonemap<T: Scalar>(
    ldr: &LdrImage<T>,
    a: f64,
    eps: f64,
    g_override: Option<f64>,
) -> Result<RadianceMap<T>> {
    check_key(a)?;
    check_positive("eps", eps)?;
    let luma = luminance(ldr).cast::<f64>();
    let guarded = luma.map_unchecked(|l| guard_luma(l, ldr.is_quantized()));
    let g = match g_override {
        Some(g) => {
            check_positive("g_override", g)?;
            g
        }
        None => recover_g(&guarded, a, eps)?.0,
    };
    let scale = g / a;
    let mut restored = Vec::with_capacity(guarded.len());
    for &l in guarded.data() {
        restored.push(scale * inverse_curve(l)?);
    }
    let restored = LumaMap::new(luma.width(), luma.height(), restored)?;
    rescale_colors(ldr, &luma, &restored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{ColorImage, DEFAULT_EPS};
    use proptest::prelude::*;

    fn gray(values: &[f64]) -> RadianceMap<f64> {
        RadianceMap::new(values.len(), 1, values.iter().map(|&v| [v; 3]).collect()).unwrap()
    }

    #[test]
    fn forward_examples() {
        assert_eq!(forward_curve(1.0), 0.5);
        assert_eq!(forward_curve(0.0), 0.0);
        let (ldr, p) = tonemap_forward(&gray(&[0.18; 16]), 0.18, DEFAULT_EPS).unwrap();
        assert!((p.g - 0.18).abs() < 1e-12);
        for px in ldr.pixels() {
            assert!((px[1] - 0.18 / 1.18).abs() < 1e-12, "{px:?} {p:?}");
        }
    }

    #[test]
    fn forward_of_black_image() {
        let (ldr, p) = tonemap_forward(&gray(&[0.0; 4]), 0.18, DEFAULT_EPS).unwrap();
        assert!((p.g - DEFAULT_EPS).abs() < 1e-12 * DEFAULT_EPS);
        assert!(ldr.pixels().iter().all(|px| *px == [0.0; 3]));
    }

    #[test]
    fn forward_rejects_bad_key() {
        assert!(tonemap_forward(&gray(&[1.0]), 0.0, DEFAULT_EPS).is_err());
        assert!(tonemap_forward(&gray(&[1.0]), 1.5, DEFAULT_EPS).is_err());
        assert!(tonemap_forward(&gray(&[1.0]), 1.0, DEFAULT_EPS).is_ok());
    }

    #[test]
    fn inverse_curve_examples() {
        assert_eq!(inverse_curve(0.0).unwrap(), 0.0);
        assert_eq!(inverse_curve(0.5).unwrap(), 1.0);
        assert!((inverse_curve(0.9).unwrap() - 9.0).abs() < 1e-12);
        assert!(matches!(inverse_curve(1.0), Err(Error::CurveDomain(_))));
        assert!(inverse_curve(-0.1).is_err());
    }

    #[test]
    fn recover_all_zero() {
        let l = LumaMap::new(3, 1, vec![0.0f64; 3]).unwrap();
        let (g, part) = recover_g(&l, 0.18, DEFAULT_EPS).unwrap();
        assert!((g - DEFAULT_EPS).abs() < 1e-18);
        assert_eq!(part, ZeroPartition { n_total: 3, n_zero: 3, n_nonzero: 0 });
    }

    #[test]
    fn recover_without_zero_pixels_fails() {
        let l = LumaMap::new(2, 1, vec![0.3f64, 0.6]).unwrap();
        assert!(matches!(recover_g(&l, 0.18, DEFAULT_EPS), Err(Error::ScaleUnrecoverable { n_total: 2 })));
        let ldr = LdrImage::new(2, 1, vec![[0.3; 3], [0.6; 3]]).unwrap();
        assert!(matches!(inverse_tonemap(&ldr, 0.18, DEFAULT_EPS, None), Err(Error::ScaleUnrecoverable { .. })));
    }

    #[test]
    fn inverse_with_override() {
        let ldr = LdrImage::new(2, 2, vec![[0.5f64; 3]; 4]).unwrap();
        let hdr = inverse_tonemap(&ldr, 0.18, DEFAULT_EPS, Some(2.0)).unwrap();
        let want = 2.0 / 0.18;
        for px in hdr.pixels() {
            assert!((px[0] - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn inverse_of_black_is_black() {
        let ldr = LdrImage::new(2, 2, vec![[0.0; 3]; 4]).unwrap();
        let hdr = inverse_tonemap(&ldr, 0.18, DEFAULT_EPS, None).unwrap();
        assert!(hdr.pixels().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn quantized_white_stays_finite() {
        let ldr = LdrImage::<f64>::from_bytes(2, 1, &[0, 0, 0, 255, 255, 255]).unwrap();
        let hdr = inverse_tonemap(&ldr, 0.18, DEFAULT_EPS, None).unwrap();
        assert!(hdr.pixels()[1][0].is_finite() && hdr.pixels()[1][0] > 0.0);
    }

    #[test]
    fn quantized_midtone_error_within_first_order_bound() {
        // True luma 0.5 + sub-step offset, quantized to 128/255.
        let (g, a) = (3.0, 0.18);
        let true_i: f64 = 0.5;
        let bytes = [0u8, 0, 0, 128, 128, 128];
        let ldr = LdrImage::<f64>::from_bytes(2, 1, &bytes).unwrap();
        let hdr = inverse_tonemap(&ldr, a, DEFAULT_EPS, Some(g)).unwrap();
        let exact = (g / a) * true_i / (1.0 - true_i);
        let bound = (g / a) / (255.0 * (1.0 - true_i).powi(2));
        assert!((hdr.pixels()[1][1] - exact).abs() <= bound);
    }

    /// Brute-force forward composition: G of the HDR source computed directly.
    #[test]
    fn recovered_g_matches_direct_geometric_mean() {
        let values = [0.0, 0.02, 0.5, 3.0, 40.0, 7.5, 0.0, 1e-3];
        let hdr = gray(&values);
        let direct = {
            let logs: f64 = values.iter().map(|v| v.max(DEFAULT_EPS).ln()).sum();
            (logs / values.len() as f64).exp()
        };
        let (ldr, _) = tonemap_forward(&hdr, 0.18, DEFAULT_EPS).unwrap();
        let (g, part) = recover_g(&luminance(&ldr), 0.18, DEFAULT_EPS).unwrap();
        assert_eq!(part.n_zero, 2);
        assert!((g - direct).abs() <= 1e-9 * direct);
    }

    proptest! {
        #[test]
        fn curve_is_a_bijection(x in 0.0f64..1e6) {
            let back = inverse_curve(forward_curve(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1e-300));
        }

        #[test]
        fn curve_is_strictly_increasing(mut xs in prop::collection::vec(0.0f64..1e3, 2..50)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            for w in xs.windows(2) {
                prop_assert!(forward_curve(w[0]) < forward_curve(w[1]));
            }
        }

        #[test]
        fn round_trip_reproduces_gray_maps(
            logs in prop::collection::vec(-3.0f64..4.0, 1..64),
            zero_at in 0usize..64,
        ) {
            let mut values: Vec<f64> = logs.iter().map(|l| 10f64.powf(*l)).collect();
            let k = zero_at % values.len();
            values[k] = 0.0;
            let hdr = gray(&values);
            let (ldr, p) = tonemap_forward(&hdr, 0.18, DEFAULT_EPS).unwrap();
            let (g, _) = recover_g(&luminance(&ldr), 0.18, DEFAULT_EPS).unwrap();
            prop_assert!((g - p.g).abs() <= 1e-9 * p.g);
            let back = inverse_tonemap(&ldr, 0.18, DEFAULT_EPS, None).unwrap();
            for (x, y) in back.pixels().iter().zip(hdr.pixels()) {
                prop_assert!((x[0] - y[0]).abs() <= 1e-6 * y[0]);
            }
        }

        #[test]
        fn recover_g_ignores_pixel_order(
            mut values in prop::collection::vec(0.0f64..0.99, 2..40),
            seed in any::<u64>(),
        ) {
            values[0] = 0.0;
            let l = LumaMap::new(values.len(), 1, values.clone()).unwrap();
            let (g1, _) = recover_g(&l, 0.18, DEFAULT_EPS).unwrap();
            // deterministic shuffle
            let mut s = seed | 1;
            for i in (1..values.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                values.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let l = LumaMap::new(values.len(), 1, values).unwrap();
            let (g2, _) = recover_g(&l, 0.18, DEFAULT_EPS).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-12 * g1);
        }
    }
}
