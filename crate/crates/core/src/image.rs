//! Image containers, luminance extraction and the log-average that anchors
//! the tone curve.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rec. 709 luminance weights for linear RGB.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Default floor applied before taking logarithms.
pub const DEFAULT_EPS: f64 = 1e-6;

pub type Rgb<T> = [T; 3];

/// Shared read access to the RGB images of this crate.
pub trait ColorImage<T: Scalar>: Sized {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixels(&self) -> &[Rgb<T>];

    /// Builds an image of this kind, bringing channels into its legal range.
    fn from_pixels_clamped(width: usize, height: usize, pixels: Vec<Rgb<T>>) -> Self;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
    }
    if width * height != len {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pixels ({width}x{height})", width * height),
            found: format!("{len} pixels"),
        });
    }
    Ok(())
}

fn dims_string(w: usize, h: usize) -> String {
    format!("{w}x{h}")
}

/// Linear-light HDR image; channels are non-negative relative luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceMap<T> {
    width: usize,
    height: usize,
    pixels: Vec<Rgb<T>>,
}

impl<T: Scalar> RadianceMap<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb<T>>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        for (i, p) in pixels.iter().enumerate() {
            for &c in p {
                if !c.is_finite() || c < T::zero() {
                    return Err(Error::InvalidImage(format!(
                        "radiance pixel {i} has channel value {c}; values must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(RadianceMap { width, height, pixels })
    }

    /// Builds a map by evaluating `f(x, y)` at each pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb<T>) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: Rgb<T>) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb<T> {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<Rgb<T>> {
        self.pixels
    }

    /// Multiplies every channel by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let pixels = self.pixels.iter().map(|p| p.map(|c| T::of(c.f64() * k))).collect();
        Self::new(self.width, self.height, pixels)
    }

    /// Converts the storage type.
    pub fn cast<U: Scalar>(&self) -> RadianceMap<U> {
        RadianceMap {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| U::of(c.f64()))).collect(),
        }
    }
}

impl<T: Scalar> ColorImage<T> for RadianceMap<T> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[Rgb<T>] {
        &self.pixels
    }
    fn from_pixels_clamped(width: usize, height: usize, pixels: Vec<Rgb<T>>) -> Self {
        let pixels = pixels
            .into_iter()
            .map(|p| p.map(|c| if c.is_nan() || c < T::zero() { T::zero() } else { c.min(T::max_value()) }))
            .collect();
        RadianceMap { width, height, pixels }
    }
}

/// Display-referred image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrImage<T> {
    width: usize,
    height: usize,
    pixels: Vec<Rgb<T>>,
    quantized: bool,
}

fn level_value<T: Scalar>(k: u8) -> T {
    T::of(f64::from(k) / 255.0)
}

fn nearest_level<T: Scalar>(c: T) -> u8 {
    (c.f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

impl<T: Scalar> LdrImage<T> {
    /// Continuous-valued image. Every channel must lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb<T>>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        for (i, p) in pixels.iter().enumerate() {
            for &c in p {
                if !(c >= T::zero() && c <= T::one()) {
                    return Err(Error::InvalidImage(format!(
                        "LDR pixel {i} has channel value {c}; values must lie in [0, 1]"
                    )));
                }
            }
        }
        Ok(LdrImage { width, height, pixels, quantized: false })
    }

    /// Image whose channels are exactly `k / 255`.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes", width * height * 3),
                found: format!("{} bytes", bytes.len()),
            });
        }
        check_dims(width, height, bytes.len() / 3)?;
        let pixels = bytes.chunks_exact(3).map(|c| [level_value(c[0]), level_value(c[1]), level_value(c[2])]).collect();
        Ok(LdrImage { width, height, pixels, quantized: true })
    }

    pub fn filled(width: usize, height: usize, value: Rgb<T>) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Nearest 8-bit level of every channel.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(nearest_level)).collect()
    }

    /// Rounds to 8-bit levels.
    pub fn quantize(&self) -> Self {
        LdrImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| level_value(nearest_level(c)))).collect(),
            quantized: true,
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb<T> {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<Rgb<T>> {
        self.pixels
    }

    pub fn cast<U: Scalar>(&self) -> LdrImage<U> {
        LdrImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| U::of(c.f64()))).collect(),
            quantized: self.quantized,
        }
    }
}

impl<T: Scalar> ColorImage<T> for LdrImage<T> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[Rgb<T>] {
        &self.pixels
    }
    /// Pixels with a channel above one are desaturated toward the gray of
    /// equal luminance until they fit, so luminance survives whenever it is
    /// itself at most one. Brighter pixels become white.
    fn from_pixels_clamped(width: usize, height: usize, pixels: Vec<Rgb<T>>) -> Self {
        let pixels = pixels.into_iter().map(fit_unit_gamut).collect();
        LdrImage { width, height, pixels, quantized: false }
    }
}

fn fit_unit_gamut<T: Scalar>(p: Rgb<T>) -> Rgb<T> {
    let c = p.map(|c| if c.is_nan() { 0.0 } else { c.f64().max(0.0) });
    let max = c[0].max(c[1]).max(c[2]);
    if max <= 1.0 {
        return c.map(T::of);
    }
    let l = pixel_luminance(&c);
    if l >= 1.0 {
        return [T::one(); 3];
    }
    let s = (1.0 - l) / (max - l);
    c.map(|v| T::of((l + s * (v - l)).clamp(0.0, 1.0)))
}

/// Single-channel map, non-negative unless built with [`LumaMap::signed`].
#[derive(Debug, Clone, PartialEq)]
pub struct LumaMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> LumaMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidImage(format!("luma pixel {i} is {v}; values must be finite and >= 0")));
        }
        Ok(LumaMap { width, height, data })
    }

    /// Accepts finite values of either sign, for derived code maps such as
    /// perceptual encodings.
    pub fn signed(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("pixel {i} is {v}; values must be finite")));
        }
        Ok(LumaMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Applies `f` per pixel. Output is re-validated.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Result<LumaMap<U>> {
        LumaMap::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn map_unchecked<U: Scalar>(&self, f: impl Fn(T) -> U) -> LumaMap<U> {
        LumaMap { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> LumaMap<U> {
        self.map_unchecked(|v| U::of(v.f64()))
    }
}

/// Rec. 709 weighted sum of one pixel.
#[inline]
pub fn pixel_luminance<T: Scalar>(p: &Rgb<T>) -> f64 {
    LUMA_WEIGHTS[0] * p[0].f64() + LUMA_WEIGHTS[1] * p[1].f64() + LUMA_WEIGHTS[2] * p[2].f64()
}

/// Per-pixel luminance of a color image.
pub fn luminance<T: Scalar, I: ColorImage<T>>(img: &I) -> LumaMap<T> {
    LumaMap {
        width: img.width(),
        height: img.height(),
        // Clamp at zero: rounding can push a weighted sum of zeros to -0.0.
        data: img.pixels().iter().map(|p| T::of(pixel_luminance(p).max(0.0))).collect(),
    }
}

/// Log-average of a luminance map with every value floored at `eps`.
pub fn geometric_mean<T: Scalar>(luma: &LumaMap<T>, eps: f64) -> f64 {
    geometric_mean_of(luma.data.iter().map(|v| v.f64()), eps)
}

pub(crate) fn geometric_mean_of(values: impl ExactSizeIterator<Item = f64>, eps: f64) -> f64 {
    let n = values.len() as f64;
    let sum: f64 = values.map(|v| v.max(eps).ln()).sum();
    (sum / n).exp()
}

/// Replaces the luminance of `src` with `new_luma`, keeping channel ratios.
///
/// Where `old_luma` is zero the color is undefined and a neutral gray of the
/// new luminance is emitted. The result is brought into the output type's
/// range; for display images this keeps luminance and gives up saturation.
pub fn rescale_colors<T, U, S, O>(src: &S, old_luma: &LumaMap<U>, new_luma: &LumaMap<U>) -> Result<O>
where
    T: Scalar,
    U: Scalar,
    S: ColorImage<T>,
    O: ColorImage<T>,
{
    let (w, h) = src.dims();
    for m in [old_luma, new_luma] {
        if (m.width, m.height) != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: dims_string(w, h),
                found: dims_string(m.width, m.height),
            });
        }
    }
    let pixels = src
        .pixels()
        .iter()
        .zip(old_luma.data.iter().zip(&new_luma.data))
        .map(|(p, (&old, &new))| {
            let (old, new) = (old.f64(), new.f64());
            if old > 0.0 {
                let ratio = new / old;
                p.map(|c| T::of(c.f64() * ratio))
            } else {
                [T::of(new); 3]
            }
        })
        .collect();
    Ok(O::from_pixels_clamped(w, h, pixels))
}
