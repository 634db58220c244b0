//! Quality of a reconstructed HDR image against a reference: PU encoding of
//! absolute luminance followed by multi-scale SSIM.

pub mod pu;
pub mod ssim;

pub use pu::{pu_encode, pu_value};
pub use ssim::{ms_ssim, ms_ssim_detailed, ssim, MsSsim};

use crate::error::{Error, Result};
use crate::image::{luminance, ColorImage, RadianceMap};
use crate::scalar::Scalar;

/// Dynamic range of PU codes handed to SSIM: the 0..255 span between the
/// curve's calibration anchors.
pub const PU_DYNAMIC_RANGE: f64 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub pu_msssim: f64,
    pub per_scale: Vec<f64>,
    pub scales: usize,
    pub reduced_scales: bool,
    /// Min and max luminance of the prediction and the reference.
    pub pred_range: (f64, f64),
    pub ref_range: (f64, f64),
}

impl QualityReport {
    /// One `key=value` pair per line.
    pub fn to_text(&self) -> String {
        let per: Vec<String> = self.per_scale.iter().map(|v| format!("{v:.9}")).collect();
        format!(
            "pu_msssim={:.9}\nscales={}\nreduced_scales={}\nper_scale={}\npred_min={:e}\npred_max={:e}\nref_min={:e}\nref_max={:e}\n",
            self.pu_msssim,
            self.scales,
            self.reduced_scales,
            per.join(","),
            self.pred_range.0,
            self.pred_range.1,
            self.ref_range.0,
            self.ref_range.1
        )
    }
}

fn range(data: &[f64]) -> (f64, f64) {
    data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Scores `pred` against `reference`, treating pixel values as cd/m².
pub fn evaluate_hdr<T: Scalar>(pred: &RadianceMap<T>, reference: &RadianceMap<T>) -> Result<QualityReport> {
    if pred.dims() != reference.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", reference.width(), reference.height()),
            found: format!("{}x{}", pred.width(), pred.height()),
        });
    }
    let lp = luminance(pred).cast::<f64>();
    let lr = luminance(reference).cast::<f64>();
    let r = ms_ssim_detailed(&pu_encode(&lp), &pu_encode(&lr), PU_DYNAMIC_RANGE)?;
    Ok(QualityReport {
        pu_msssim: r.score,
        scales: r.per_scale.len(),
        per_scale: r.per_scale,
        reduced_scales: r.reduced,
        pred_range: range(lp.data()),
        ref_range: range(lr.data()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn self_score_is_one_and_scaling_hurts() {
        let e = synth::scene::<f64>(64, 64, 1).unwrap();
        let r = evaluate_hdr(&e, &e).unwrap();
        assert!((r.pu_msssim - 1.0).abs() < 1e-12);
        assert_eq!(r.scales, 3);
        assert!(r.to_text().starts_with("pu_msssim=1.000000000\n"));
        let doubled = e.scaled(2.0).unwrap();
        assert!(evaluate_hdr(&doubled, &e).unwrap().pu_msssim < 1.0);
    }
}
