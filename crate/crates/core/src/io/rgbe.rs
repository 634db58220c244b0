//! Radiance RGBE (`.hdr`) reader and writer.
//!
//! Reads flat, old-style run-length and new-style run-length scanlines;
//! writes new-style RLE. Only the standard `-Y H +X W` orientation is
//! supported. Channels decode as `m · 2^(e - 136)` (i.e. `(m/256)·2^(e-128)`),
//! with `e = 0` meaning black.

use std::fs;
use std::path::Path;

use crate::error::{CodecError, Error, Result};
use crate::image::{ColorImage, RadianceMap};
use crate::scalar::Scalar;

const FORMAT: &str = "RGBE";
const FORMAT_LINE: &str = "FORMAT=32-bit_rle_rgbe";
const MAX_HEADER: usize = 64 * 1024;
const MIN_RLE_WIDTH: usize = 8;
const MAX_RLE_WIDTH: usize = 0x7fff;

fn err(offset: usize, msg: impl Into<String>) -> CodecError {
    CodecError::new(FORMAT, offset, msg)
}

/// One shared-exponent pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RgbePixel {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub e: u8,
}

impl RgbePixel {
    pub const BLACK: RgbePixel = RgbePixel { r: 0, g: 0, b: 0, e: 0 };

    pub fn decode(self) -> [f32; 3] {
        if self.e == 0 {
            return [0.0; 3];
        }
        let f = 2f64.powi(i32::from(self.e) - 136);
        [self.r, self.g, self.b].map(|m| (f64::from(m) * f) as f32)
    }

    /// Nearest representable pixel. Channels are rounded to the mantissa
    /// grid of the largest channel's exponent.
    pub fn encode(rgb: [f64; 3]) -> Self {
        let rgb = rgb.map(|c| if c.is_finite() && c > 0.0 { c } else { 0.0 });
        let max = rgb[0].max(rgb[1]).max(rgb[2]);
        if max < 1e-38 {
            return Self::BLACK;
        }
        // max = mant · 2^exp with mant in [0.5, 1)
        let mut exp = max.log2().floor() as i32 + 1;
        let quantize = |exp: i32| rgb.map(|c| (c * 2f64.powi(8 - exp)).round());
        let mut m = quantize(exp);
        if m.iter().any(|&v| v > 255.0) {
            exp += 1;
            m = quantize(exp);
        }
        let e = exp + 128;
        if e > 255 {
            return RgbePixel { r: 255, g: 255, b: 255, e: 255 };
        }
        if e < 1 {
            return Self::BLACK;
        }
        RgbePixel { r: m[0] as u8, g: m[1] as u8, b: m[2] as u8, e: e as u8 }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8, CodecError> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| err(self.pos, "truncated scanline data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| err(self.pos, "truncated scanline data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn line(&mut self) -> Result<(&'a str, usize), CodecError> {
        let start = self.pos;
        let rel = self.bytes[start..]
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(start, "unterminated header line"))?;
        let raw = &self.bytes[start..start + rel];
        if let Some(i) = raw.iter().position(|&b| !(b == b'\t' || (0x20..0x7f).contains(&b))) {
            return Err(err(start + i, "non-printable byte in header"));
        }
        self.pos = start + rel + 1;
        Ok((std::str::from_utf8(raw).expect("printable ASCII"), start))
    }
}

fn parse_count(tok: &str, offset: usize) -> Result<usize, CodecError> {
    let ok = !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) && !tok.starts_with('0');
    if !ok {
        return Err(err(offset, format!("bad resolution value {tok:?}")));
    }
    tok.parse().map_err(|_| err(offset, format!("resolution value {tok:?} out of range")))
}

fn read_header(cur: &mut Cursor) -> Result<(usize, usize), CodecError> {
    let (magic, at) = cur.line()?;
    if magic != "#?RADIANCE" && magic != "#?RGBE" {
        return Err(err(at, format!("bad magic {magic:?}")));
    }
    let mut saw_format = false;
    loop {
        if cur.pos > MAX_HEADER {
            return Err(err(cur.pos, "header too long"));
        }
        let (line, at) = cur.line()?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if line != FORMAT_LINE {
                return Err(err(at, format!("unsupported pixel format {fmt:?}")));
            }
            saw_format = true;
        }
    }
    if !saw_format {
        return Err(err(cur.pos, "header lacks FORMAT=32-bit_rle_rgbe"));
    }
    let (res, at) = cur.line()?;
    let toks: Vec<&str> = res.split(' ').collect();
    match toks.as_slice() {
        ["-Y", h, "+X", w] => Ok((parse_count(w, at)?, parse_count(h, at)?)),
        _ => Err(err(at, format!("unsupported resolution line {res:?} (only \"-Y H +X W\")"))),
    }
}

fn read_flat(cur: &mut Cursor, first: [u8; 4], out: &mut [RgbePixel]) -> Result<(), CodecError> {
    let mut shift = 0u32;
    let mut i = 0;
    let mut next = Some(first);
    while i < out.len() {
        let q = match next.take() {
            Some(q) => q,
            None => {
                let s = cur.take(4)?;
                [s[0], s[1], s[2], s[3]]
            }
        };
        if q[0] == 1 && q[1] == 1 && q[2] == 1 {
            if i == 0 {
                return Err(err(cur.pos - 4, "run-length repeat with no previous pixel"));
            }
            let count = (q[3] as usize) << shift;
            if i + count > out.len() {
                return Err(err(cur.pos - 4, "run-length repeat overflows scanline"));
            }
            let prev = out[i - 1];
            out[i..i + count].fill(prev);
            i += count;
            shift += 8;
            if shift > 24 {
                return Err(err(cur.pos - 4, "run-length repeat count too large"));
            }
        } else {
            out[i] = RgbePixel { r: q[0], g: q[1], b: q[2], e: q[3] };
            i += 1;
            shift = 0;
        }
    }
    Ok(())
}

fn read_rle(cur: &mut Cursor, width: usize, out: &mut [RgbePixel]) -> Result<(), CodecError> {
    let mut channels = vec![0u8; width * 4];
    for c in 0..4 {
        let mut x = 0;
        while x < width {
            let at = cur.pos;
            let count = cur.byte()? as usize;
            if count > 128 {
                let run = count - 128;
                if x + run > width {
                    return Err(err(at, "run overflows scanline"));
                }
                let v = cur.byte()?;
                channels[c * width + x..c * width + x + run].fill(v);
                x += run;
            } else {
                if count == 0 || x + count > width {
                    return Err(err(at, "bad literal length in scanline"));
                }
                let lit = cur.take(count)?;
                channels[c * width + x..c * width + x + count].copy_from_slice(lit);
                x += count;
            }
        }
    }
    for (x, px) in out.iter_mut().enumerate() {
        *px = RgbePixel {
            r: channels[x],
            g: channels[width + x],
            b: channels[2 * width + x],
            e: channels[3 * width + x],
        };
    }
    Ok(())
}

pub fn decode_hdr(bytes: &[u8]) -> Result<RadianceMap<f32>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (w, h) = read_header(&mut cur)?;
    // RLE packs at most ~16 pixels per byte; anything denser is a lie.
    let total = w
        .checked_mul(h)
        .filter(|&n| n / 32 <= bytes.len())
        .ok_or_else(|| err(cur.pos, "resolution implies more pixels than the file can hold"))?;
    let mut raw = vec![RgbePixel::BLACK; total];
    for row in raw.chunks_exact_mut(w) {
        let at = cur.pos;
        let q = cur.take(4)?;
        let q = [q[0], q[1], q[2], q[3]];
        let rle_marker = q[0] == 2 && q[1] == 2 && q[2] & 0x80 == 0;
        if (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w) && rle_marker {
            let encoded = (usize::from(q[2]) << 8) | usize::from(q[3]);
            if encoded != w {
                return Err(err(at, format!("scanline width {encoded} does not match image width {w}")).into());
            }
            read_rle(&mut cur, w, row)?;
        } else {
            read_flat(&mut cur, q, row)?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(err(cur.pos, format!("{} trailing bytes after last scanline", bytes.len() - cur.pos)).into());
    }
    let pixels = raw.into_iter().map(RgbePixel::decode).collect();
    RadianceMap::new(w, h, pixels)
}

fn write_rle_channel(out: &mut Vec<u8>, data: &[u8]) {
    const MIN_RUN: usize = 4;
    let mut cur = 0;
    while cur < data.len() {
        // find the next run of at least MIN_RUN equal bytes
        let mut beg = cur;
        let mut run = 0;
        while beg < data.len() {
            run = 1;
            while run < 127 && beg + run < data.len() && data[beg + run] == data[beg] {
                run += 1;
            }
            if run >= MIN_RUN {
                break;
            }
            beg += run;
        }
        if run < MIN_RUN {
            beg = data.len();
        }
        // literal bytes before the run
        while cur < beg {
            let n = (beg - cur).min(128);
            out.push(n as u8);
            out.extend_from_slice(&data[cur..cur + n]);
            cur += n;
        }
        if beg < data.len() {
            out.push(128 + run as u8);
            out.push(data[beg]);
            cur = beg + run;
        }
    }
}

pub fn encode_hdr<T: Scalar>(img: &RadianceMap<T>) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("#?RADIANCE\n{FORMAT_LINE}\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w);
    let mut channels = vec![0u8; w * 4];
    for y in 0..h {
        let row: Vec<RgbePixel> = (0..w).map(|x| RgbePixel::encode(img.pixel(x, y).map(|c| c.f64()))).collect();
        if rle {
            for (x, p) in row.iter().enumerate() {
                channels[x] = p.r;
                channels[w + x] = p.g;
                channels[2 * w + x] = p.b;
                channels[3 * w + x] = p.e;
            }
            out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
            for c in 0..4 {
                write_rle_channel(&mut out, &channels[c * w..(c + 1) * w]);
            }
        } else {
            for p in row {
                out.extend_from_slice(&[p.r, p.g, p.b, p.e]);
            }
        }
    }
    out
}

pub fn read_hdr(path: &Path) -> Result<RadianceMap<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_hdr(&bytes)
}

pub fn write_hdr<T: Scalar>(path: &Path, img: &RadianceMap<T>) -> Result<()> {
    fs::write(path, encode_hdr(img)).map_err(|e| Error::io(path, e))
}
