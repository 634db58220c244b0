//! Virtual camera: random exposure and a sigmoidal response curve that turn
//! an HDR patch into a plausible camera LDR image.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::image::{geometric_mean, luminance, rescale_colors, LdrImage, LumaMap, RadianceMap};
use crate::reinhard::{check_positive, DEFAULT_KEY};
use crate::scalar::Scalar;

/// Exposure offsets are drawn from `[-EXPOSURE_RANGE, EXPOSURE_RANGE]` stops.
pub const EXPOSURE_RANGE: f64 = 4.0;

pub const ETA_MEAN: f64 = 0.6;
pub const GAMMA_MEAN: f64 = 0.9;
/// Shared variance of both response-curve parameters.
pub const CRF_VARIANCE: f64 = 0.1;

/// Response curve `min((1+η)·X^γ / (X^γ + η), 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfParams {
    pub eta: f64,
    pub gamma: f64,
}

impl CrfParams {
    pub fn new(eta: f64, gamma: f64) -> Result<Self> {
        check_positive("eta", eta)?;
        check_positive("gamma", gamma)?;
        Ok(CrfParams { eta, gamma })
    }

    #[inline]
    pub fn response(&self, x: f64) -> f64 {
        let xg = x.powf(self.gamma);
        if xg.is_infinite() {
            return 1.0;
        }
        ((1.0 + self.eta) * xg / (xg + self.eta)).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureParams {
    /// Offset in stops.
    pub v: f64,
    /// Shutter time `0.18 · 2^v / G`.
    pub delta_t: f64,
}

fn check_offset(v: f64) -> Result<()> {
    if (-EXPOSURE_RANGE..=EXPOSURE_RANGE).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "v", value: v, reason: "exposure offset must lie in [-4, 4]" })
    }
}

/// Exposure of the patch luminance for offset `v`: `Δt · L` with the shutter
/// time chosen so `v = 0` puts the log-average at middle gray.
pub fn sample_exposure<T: Scalar>(patch: &RadianceMap<T>, v: f64, eps: f64) -> Result<(LumaMap<f64>, ExposureParams)> {
    check_offset(v)?;
    check_positive("eps", eps)?;
    let luma = luminance(patch).cast::<f64>();
    let delta_t = DEFAULT_KEY * v.exp2() / geometric_mean(&luma, eps);
    Ok((luma.map_unchecked(|l| delta_t * l), ExposureParams { v, delta_t }))
}

pub fn apply_crf(exposure: &LumaMap<f64>, p: &CrfParams) -> LumaMap<f64> {
    exposure.map_unchecked(|x| p.response(x))
}

fn positive_normal<R: Rng + ?Sized>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let s = dist.sample(rng);
        if s > 0.0 {
            return s;
        }
    }
}

/// Draws `η ~ N(0.6, 0.1)` and `γ ~ N(0.9, 0.1)` (variances), redrawing
/// non-positive samples.
pub fn sample_crf_params<R: Rng + ?Sized>(rng: &mut R) -> CrfParams {
    let sd = CRF_VARIANCE.sqrt();
    let eta = positive_normal(&Normal::new(ETA_MEAN, sd).expect("valid normal"), rng);
    let gamma = positive_normal(&Normal::new(GAMMA_MEAN, sd).expect("valid normal"), rng);
    CrfParams { eta, gamma }
}

pub fn sample_exposure_offset<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Uniform::new_inclusive(-EXPOSURE_RANGE, EXPOSURE_RANGE).expect("valid range").sample(rng)
}

/// Full virtual-camera capture: exposure and response applied to luminance,
/// colors restored from the patch's channel ratios.
pub fn capture<T: Scalar>(patch: &RadianceMap<T>, v: f64, crf: &CrfParams, eps: f64) -> Result<LdrImage<T>> {
    let (exposure, _) = sample_exposure(patch, v, eps)?;
    let response = apply_crf(&exposure, crf);
    let luma = luminance(patch).cast::<f64>();
    rescale_colors(patch, &luma, &response)
}
