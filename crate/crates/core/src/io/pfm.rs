//! Portable float map, color (`PF`) variant only.
//!
//! The header is parsed strictly: one line each for the magic, `W H` and
//! the scale, single spaces, no leading zeros, and a scale of magnitude 1.
//! The scale's sign selects the payload byte order (negative means
//! little-endian). Rows are stored bottom to top.

use std::fs;
use std::path::Path;

use crate::error::{CodecError, Error, Result};
use crate::image::{ColorImage, RadianceMap};
use crate::scalar::Scalar;

const FORMAT: &str = "PFM";

fn err(offset: usize, msg: impl Into<String>) -> CodecError {
    CodecError::new(FORMAT, offset, msg)
}

/// Serializes as little-endian `PF`.
pub fn encode_pfm<T: Scalar>(img: &RadianceMap<T>) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for y in (0..h).rev() {
        for x in 0..w {
            for c in img.pixel(x, y) {
                out.extend_from_slice(&(c.f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

fn line(bytes: &[u8], start: usize) -> Result<(&str, usize), CodecError> {
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| start + p)
        .ok_or_else(|| err(start, "unterminated header line"))?;
    let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| err(start, "header line is not ASCII"))?;
    Ok((text, end + 1))
}

fn parse_dim(tok: &str, offset: usize) -> Result<usize, CodecError> {
    let ok = !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) && !(tok.len() > 1 && tok.starts_with('0'));
    let v: usize =
        if ok { tok.parse().ok() } else { None }.ok_or_else(|| err(offset, format!("bad dimension {tok:?}")))?;
    if v == 0 {
        return Err(err(offset, "zero dimension"));
    }
    Ok(v)
}

fn parse_scale(tok: &str, offset: usize) -> Result<f32, CodecError> {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return Err(err(offset, format!("malformed scale {tok:?}")));
    }
    let scale: f32 = tok.parse().map_err(|_| err(offset, format!("malformed scale {tok:?}")))?;
    if scale.abs() != 1.0 {
        return Err(err(offset, format!("unsupported scale magnitude {tok:?} (only +-1 is accepted)")));
    }
    Ok(scale)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<RadianceMap<f32>> {
    let (magic, pos) = line(bytes, 0)?;
    match magic {
        "PF" => {}
        "Pf" => return Err(err(0, "grayscale PFM (Pf) is not supported; expected color PF").into()),
        other => return Err(err(0, format!("bad magic {other:?}")).into()),
    }
    let dims_at = pos;
    let (dims, pos) = line(bytes, pos)?;
    let mut toks = dims.split(' ');
    let (w, h) = match (toks.next(), toks.next(), toks.next()) {
        (Some(w), Some(h), None) => (parse_dim(w, dims_at)?, parse_dim(h, dims_at)?),
        _ => return Err(err(dims_at, format!("expected \"W H\", found {dims:?}")).into()),
    };
    let scale_at = pos;
    let (scale, data_at) = line(bytes, pos)?;
    let little = parse_scale(scale, scale_at)? < 0.0;
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(12)).ok_or_else(|| err(dims_at, "dimensions overflow"))?;
    let payload = &bytes[data_at..];
    if payload.len() != need {
        return Err(err(data_at, format!("payload is {} bytes, header implies {need}", payload.len())).into());
    }
    let mut pixels = vec![[0f32; 3]; w * h];
    for (i, chunk) in payload.chunks_exact(12).enumerate() {
        let (row, x) = (i / w, i % w);
        let y = h - 1 - row;
        let mut px = [0f32; 3];
        for (c, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            px[c] = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        }
        if px.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(
                err(data_at + i * 12, format!("pixel {i} holds {px:?}; radiance must be finite and >= 0")).into()
            );
        }
        pixels[y * w + x] = px;
    }
    RadianceMap::new(w, h, pixels)
}

pub fn read_pfm(path: &Path) -> Result<RadianceMap<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn write_pfm<T: Scalar>(path: &Path, img: &RadianceMap<T>) -> Result<()> {
    fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RadianceMap<f32> {
        RadianceMap::from_fn(5, 3, |x, y| [x as f32 * 0.25, y as f32 + 0.125, 1e-7 * (x + y) as f32]).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let img = sample();
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn big_endian_payload() {
        let mut bytes = b"PF\n1 2\n1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode_pfm(&bytes).unwrap();
        // first stored row is the bottom one
        assert_eq!(img.pixel(0, 1), [1.0, 2.0, 3.0]);
        assert_eq!(img.pixel(0, 0), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn negative_scale_means_little_endian() {
        let bytes = encode_pfm(&sample());
        assert!(bytes.starts_with(b"PF\n5 3\n-1.0\n"));
        assert_eq!(&bytes[12..16], &0f32.to_le_bytes());
    }

    #[test]
    fn rejects_grayscale_and_garbage() {
        let e = decode_pfm(b"Pf\n1 1\n-1.0\n\0\0\0\0").unwrap_err();
        assert!(e.to_string().contains("grayscale"), "{e}");
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"PF\n01 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"PF\n1 1\n-2.0\n").is_err());
        assert!(decode_pfm(b"").is_err());
    }
}
