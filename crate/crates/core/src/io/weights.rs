//! Versioned network weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "ITMW" | version u32 | base depth input_size scale_num scale_den: u32
//! | tensor_count u32 | payload_len u64 | crc32 u32
//! payload: per tensor { name_len u16, name, rank u8, dims u32 x rank, f32 data }
//! ```
//!
//! The CRC covers the header fields before it and the whole payload.

use std::fs;
use std::path::Path;

use crate::error::{CodecError, Error, Result};
use crate::scalar::Scalar;
use crate::unet::{UNet, UNetConfig};

pub const MAGIC: &[u8; 4] = b"ITMW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 5 * 4 + 4 + 8 + 4;
const FORMAT: &str = "weights";

fn err(offset: usize, msg: impl Into<String>) -> Error {
    CodecError::new(FORMAT, offset, msg).into()
}

pub fn encode_weights<T: Scalar>(net: &UNet<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    for p in net.params() {
        payload.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        payload.extend_from_slice(p.name.as_bytes());
        payload.push(p.dims.len() as u8);
        for d in &p.dims {
            payload.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            payload.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let c = net.config();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.base_channels, c.depth, c.input_size, c.scale_num, c.scale_den, net.params().len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    let mut h = crc32fast::Hasher::new();
    h.update(&out);
    h.update(&payload);
    out.extend_from_slice(&h.finalize().to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| err(self.pos, format!("truncated: need {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses and verifies a container; the config comes from the header.
pub fn decode_weights(bytes: &[u8]) -> Result<UNet<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(err(0, "bad magic; not a weight file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version} (expected {VERSION})")));
    }
    let config = UNetConfig {
        base_channels: r.u32()?,
        depth: r.u32()?,
        input_size: r.u32()?,
        scale_num: r.u32()?,
        scale_den: r.u32()?,
    };
    let count = r.u32()? as usize;
    let payload_len = r.u64()?;
    let crc_at = r.pos;
    let stored = r.u32()?;
    let payload_at = r.pos;
    if payload_len != (bytes.len() - payload_at) as u64 {
        return Err(err(
            crc_at - 8,
            format!("payload length {payload_len} disagrees with {} bytes present", bytes.len() - payload_at),
        ));
    }
    let mut h = crc32fast::Hasher::new();
    h.update(&bytes[..crc_at]);
    h.update(&bytes[payload_at..]);
    let computed = h.finalize();
    if computed != stored {
        return Err(Error::Integrity { stored, computed });
    }
    config.validate()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let at = r.pos;
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| err(at, "tensor name is not UTF-8"))?.to_string();
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| err(at, "tensor too large"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| err(at, "tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        tensors.push((name, dims, data));
    }
    if r.pos != bytes.len() {
        return Err(err(r.pos, "trailing bytes after last tensor"));
    }
    UNet::from_params(config, tensors)
}

pub fn save_weights<T: Scalar>(path: &Path, net: &UNet<T>) -> Result<()> {
    fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

/// Loads a container. With `expected`, a file written for another config is
/// rejected with both configs named.
pub fn load_weights(path: &Path, expected: Option<&UNetConfig>) -> Result<UNet<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let net = decode_weights(&bytes)?;
    if let Some(want) = expected {
        if net.config() != want {
            return Err(Error::ConfigMismatch { expected: want.to_string(), found: net.config().to_string() });
        }
    }
    Ok(net)
}
