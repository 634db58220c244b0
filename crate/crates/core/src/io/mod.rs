//! File codecs: Radiance RGBE and PFM for HDR data, 8-bit PNG for LDR data,
//! and the versioned network weight container.

pub mod pfm;
pub mod png;
pub mod rgbe;
pub mod weights;

use std::path::Path;

use crate::error::{CodecError, Result};
use crate::image::RadianceMap;

/// Reads `.hdr`/`.pic` (RGBE) or `.pfm` by extension.
pub fn read_radiance(path: &Path) -> Result<RadianceMap<f32>> {
    match extension(path).as_str() {
        "hdr" | "pic" | "rgbe" => rgbe::read_hdr(path),
        "pfm" => pfm::read_pfm(path),
        other => {
            Err(CodecError::new("image", 0, format!("unsupported HDR extension {other:?} (use .hdr or .pfm)")).into())
        }
    }
}

pub fn write_radiance<T: crate::Scalar>(path: &Path, img: &RadianceMap<T>) -> Result<()> {
    match extension(path).as_str() {
        "hdr" | "pic" | "rgbe" => rgbe::write_hdr(path, img),
        "pfm" => pfm::write_pfm(path, img),
        other => {
            Err(CodecError::new("image", 0, format!("unsupported HDR extension {other:?} (use .hdr or .pfm)")).into())
        }
    }
}

pub fn extension(path: &Path) -> String {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default()
}
