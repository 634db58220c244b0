//! Perceptually uniform (PU) encoding of absolute luminance.
//!
//! Code values come from integrating peak contrast sensitivity over log
//! luminance, so equal code steps are roughly equally visible. The curve is
//! anchored so that 0.1 cd/m² maps to 0 and 80 cd/m² to 255, and is stored
//! as a piecewise linear function of `log10 L` on uniformly spaced knots.

use crate::image::LumaMap;
use crate::scalar::Scalar;

/// Luminance range (cd/m²) accepted by [`pu_encode`]; inputs are clamped.
pub const PU_MIN_LUMINANCE: f64 = 1e-5;
pub const PU_MAX_LUMINANCE: f64 = 1e10;
/// `log10 L` of the first knot and the knot spacing.
pub const PU_KNOT_START: f64 = -5.0;
pub const PU_KNOT_STEP: f64 = 0.25;

/// Code values at `log10 L = -5, -4.75, ..., 10`.
pub const PU_KNOTS: [f64; 61] = [
    -26.513168,
    -26.376318,
    -26.200029,
    -25.972940,
    -25.680417,
    -25.303617,
    -24.818280,
    -24.193180,
    -23.388142,
    -22.351509,
    -21.016941,
    -19.299389,
    -17.090156,
    -14.251054,
    -10.607956,
    -5.944762,
    0.000000,
    7.529937,
    16.976051,
    28.669062,
    42.907806,
    59.942408,
    79.982664,
    103.218176,
    129.824655,
    159.940098,
    193.609899,
    230.715743,
    270.924422,
    313.704531,
    358.425983,
    404.490645,
    451.420940,
    498.881130,
    546.654842,
    594.610174,
    642.669396,
    690.787610,
    738.939181,
    787.109569,
    835.290556,
    883.477509,
    931.667820,
    979.860020,
    1028.053281,
    1076.247140,
    1124.441334,
    1172.635718,
    1220.830208,
    1269.024757,
    1317.219341,
    1365.413943,
    1413.608555,
    1461.803174,
    1509.997796,
    1558.192420,
    1606.387045,
    1654.581670,
    1702.776296,
    1750.970922,
    1799.165548,
];

/// Code value for one luminance.
pub fn pu_value(l: f64) -> f64 {
    let l = if l.is_nan() { PU_MIN_LUMINANCE } else { l.clamp(PU_MIN_LUMINANCE, PU_MAX_LUMINANCE) };
    let t = (l.log10() - PU_KNOT_START) / PU_KNOT_STEP;
    let i = (t.floor() as usize).min(PU_KNOTS.len() - 2);
    let f = t - i as f64;
    PU_KNOTS[i] + f * (PU_KNOTS[i + 1] - PU_KNOTS[i])
}

/// Elementwise PU encoding.
pub fn pu_encode<T: Scalar>(luma: &LumaMap<T>) -> LumaMap<f64> {
    let data = luma.data().iter().map(|v| pu_value(v.f64())).collect();
    LumaMap::signed(luma.width(), luma.height(), data).expect("PU codes are finite")
}
