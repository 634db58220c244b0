//! Procedural HDR scenes for tests and demos.
//!
//! Each scene is a smooth log-luminance field spanning a few decades, with
//! fine texture, a slowly varying tint, a handful of small very bright
//! lights and a region of exact black.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::Result;
use crate::image::RadianceMap;
use crate::rng;
use crate::scalar::Scalar;

pub fn scene<T: Scalar>(width: usize, height: usize, seed: u64) -> Result<RadianceMap<T>> {
    let mut r = rng::seeded(seed);
    let (wf, hf) = (width as f64, height as f64);
    let mu: f64 = r.random_range(-1.0..2.0);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                r.random_range(0.5..3.0) / wf,
                r.random_range(0.5..3.0) / hf,
                r.random_range(0.0..TAU),
                r.random_range(0.2..0.6),
            ]
        })
        .collect();
    let tints: Vec<[f64; 3]> =
        (0..3).map(|_| [r.random_range(0.5..2.0) / wf, r.random_range(0.0..TAU), r.random_range(0.1..0.35)]).collect();
    let stripe = [r.random_range(4.0..12.0) / wf, r.random_range(4.0..12.0) / hf, r.random_range(0.1..0.4)];
    let lights: Vec<[f64; 4]> = (0..r.random_range(1..4))
        .map(|_| {
            [
                r.random_range(0.0..wf),
                r.random_range(0.0..hf),
                r.random_range(1.5..0.06 * wf.min(hf) + 2.0),
                r.random_range(2.5..4.0),
            ]
        })
        .collect();
    // black occluder: a disc plus a band along one edge
    let disc = [r.random_range(0.2..0.8) * wf, r.random_range(0.2..0.8) * hf, r.random_range(0.12..0.25) * wf.min(hf)];
    let band_frac: f64 = r.random_range(0.08..0.18);
    let band_edge = r.random_range(0..4u8);
    RadianceMap::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let in_disc = (xf - disc[0]).powi(2) + (yf - disc[1]).powi(2) < disc[2] * disc[2];
        let in_band = match band_edge {
            0 => xf < band_frac * wf,
            1 => xf > (1.0 - band_frac) * wf,
            2 => yf < band_frac * hf,
            _ => yf > (1.0 - band_frac) * hf,
        };
        if in_disc || in_band {
            return [T::zero(); 3];
        }
        let mut log_l = mu;
        for w in &waves {
            log_l += w[3] * (TAU * (w[0] * xf + w[1] * yf) + w[2]).cos();
        }
        log_l += stripe[2] * (TAU * stripe[0] * xf).sin() * (TAU * stripe[1] * yf).sin();
        for l in &lights {
            if (xf - l[0]).powi(2) + (yf - l[1]).powi(2) < l[2] * l[2] {
                log_l = log_l.max(l[3]);
            }
        }
        let lum = 10f64.powf(log_l);
        let mut rgb = [0.0; 3];
        for (c, t) in tints.iter().enumerate() {
            rgb[c] = 1.0 + t[2] * (TAU * t[0] * (xf + yf) + t[1]).sin();
        }
        let norm = crate::image::pixel_luminance(&rgb);
        rgb.map(|v| T::of(lum * v / norm))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{luminance, ColorImage};

    #[test]
    fn scenes_are_seeded_and_have_black_and_range() {
        let a = scene::<f32>(96, 80, 3).unwrap();
        assert_eq!(a, scene::<f32>(96, 80, 3).unwrap());
        assert_ne!(a, scene::<f32>(96, 80, 4).unwrap());
        let l = luminance(&a);
        let zeros = l.data().iter().filter(|v| **v == 0.0).count();
        assert!(zeros > 0 && zeros < l.len() / 2);
        let max = l.data().iter().cloned().fold(0.0f32, f32::max);
        let min = l.data().iter().cloned().filter(|v| *v > 0.0).fold(f32::MAX, f32::min);
        assert!(max / min > 100.0, "{min} {max}");
        assert_eq!(a.dims(), (96, 80));
    }
}
