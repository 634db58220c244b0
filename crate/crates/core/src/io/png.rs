//! 8-bit RGB PNG. Bytes map to `k / 255` exactly; no transfer function is
//! applied in either direction.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{CodecError, Error, Result};
use crate::image::{ColorImage, LdrImage};
use crate::scalar::Scalar;

const FORMAT: &str = "PNG";

fn err(msg: impl Into<String>) -> Error {
    CodecError::new(FORMAT, 0, msg).into()
}

pub fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<LdrImage<T>> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| err(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| err("image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| err(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(err(format!("unsupported bit depth {:?}; expected 8-bit", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let stride = info.line_size;
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(err(format!("unsupported color type {other:?}"))),
    };
    let mut rgb = Vec::with_capacity(w * h * 3);
    for row in data.chunks_exact(stride).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            match channels {
                1 | 2 => rgb.extend_from_slice(&[px[0]; 3]),
                _ => rgb.extend_from_slice(&px[..3]),
            }
        }
    }
    LdrImage::from_bytes(w, h, &rgb)
}

pub fn encode_png<T: Scalar>(img: &LdrImage<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| err(e.to_string()))?;
        writer.write_image_data(&img.to_bytes()).map_err(|e| err(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_png<T: Scalar>(path: &Path) -> Result<LdrImage<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

pub fn write_png<T: Scalar>(path: &Path, img: &LdrImage<T>) -> Result<()> {
    fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_map_exactly() {
        let bytes: Vec<u8> = (0..=255u8).flat_map(|k| [k, 255 - k, 128]).collect();
        let img = LdrImage::<f64>::from_bytes(16, 16, &bytes).unwrap();
        let back: LdrImage<f64> = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.pixel(15, 15), [1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn rejects_non_png() {
        assert!(decode_png::<f32>(b"not a png").is_err());
    }
}
