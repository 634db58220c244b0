use std::panic::{catch_unwind, AssertUnwindSafe};

use itm_core::io::{pfm, png, rgbe, weights};
use itm_core::unet::UNet;
use itm_core::{rng, synth, ColorImage, Error, LdrImage, RadianceMap, UNetConfig};
use proptest::prelude::*;
use rand::Rng;

fn tiny_config() -> UNetConfig {
    UNetConfig { base_channels: 2, depth: 2, input_size: 8, scale_num: 1, scale_den: 1 }
}

fn header_len(bytes: &[u8], newlines: usize) -> usize {
    bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(newlines - 1).map(|(i, _)| i + 1).unwrap()
}

#[derive(Debug)]
enum Corruption {
    Flip { at: usize, mask: u8 },
    Replace { at: usize, byte: u8 },
    Truncate { len: usize },
}

fn corrupt(bytes: &[u8], header: usize, r: &mut rng::Rng) -> (Vec<u8>, Corruption) {
    let mut out = bytes.to_vec();
    let c = match r.random_range(0..3) {
        0 => Corruption::Flip { at: r.random_range(0..header), mask: r.random_range(1..=255) },
        1 => Corruption::Replace { at: r.random_range(0..header), byte: r.random() },
        _ => Corruption::Truncate { len: r.random_range(0..header) },
    };
    match c {
        Corruption::Flip { at, mask } => out[at] ^= mask,
        Corruption::Replace { at, byte } => out[at] = byte,
        Corruption::Truncate { len } => out.truncate(len),
    }
    (out, c)
}

/// 100 header corruptions; decoding must never panic, and every damaged
/// input must be rejected with a structured error.
fn fuzz_headers<T>(name: &str, valid: &[u8], header: usize, decode: impl Fn(&[u8]) -> Result<T, Error>) {
    let mut r = rng::seeded(0xf00d);
    let mut cases = 0;
    while cases < 100 {
        let (bad, how) = corrupt(valid, header, &mut r);
        if bad == valid {
            continue;
        }
        cases += 1;
        let got = catch_unwind(AssertUnwindSafe(|| decode(&bad)));
        match got {
            Err(_) => panic!("{name}: decoder panicked on {how:?}"),
            Ok(Ok(_)) => panic!("{name}: accepted {how:?}"),
            Ok(Err(e)) => assert!(
                matches!(e, Error::Codec(_) | Error::Integrity { .. }),
                "{name}: unstructured error {e:?} for {how:?}"
            ),
        }
    }
}

#[test]
fn header_fuzz_never_panics() {
    let img = synth::scene::<f32>(16, 12, 3).unwrap();
    let hdr = rgbe::encode_hdr(&img);
    fuzz_headers("rgbe", &hdr, header_len(&hdr, 4), rgbe::decode_hdr);
    let pf = pfm::encode_pfm(&img);
    fuzz_headers("pfm", &pf, header_len(&pf, 3), pfm::decode_pfm);
    let w = weights::encode_weights(&UNet::<f32>::build(tiny_config(), 1).unwrap());
    fuzz_headers("weights", &w, 44, weights::decode_weights);
}

#[test]
fn pfm_round_trip_is_bitwise() {
    let img = synth::scene::<f32>(37, 21, 8).unwrap();
    let bytes = pfm::encode_pfm(&img);
    let back = pfm::decode_pfm(&bytes).unwrap();
    assert_eq!(back.dims(), img.dims());
    for (a, b) in back.pixels().iter().zip(img.pixels()) {
        assert_eq!(a.map(f32::to_bits), b.map(f32::to_bits));
    }
    assert_eq!(pfm::encode_pfm(&back), bytes);
}

#[test]
fn weights_round_trip_is_bitwise() {
    let net = UNet::<f32>::build(tiny_config(), 4).unwrap();
    let bytes = weights::encode_weights(&net);
    let back = weights::decode_weights(&bytes).unwrap();
    assert_eq!(back.config(), net.config());
    for (a, b) in back.params().iter().zip(net.params()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.dims, b.dims);
        let bits = |p: &[f32]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.value.data()), bits(b.value.data()));
    }
    assert_eq!(weights::encode_weights(&back), bytes);
}

#[test]
fn weights_reject_wrong_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.itmw");
    weights::save_weights(&path, &UNet::<f32>::build(tiny_config(), 4).unwrap()).unwrap();
    let other = UNetConfig { depth: 1, ..tiny_config() };
    assert!(matches!(weights::load_weights(&path, Some(&other)), Err(Error::ConfigMismatch { .. })));
    assert!(weights::load_weights(&path, Some(&tiny_config())).is_ok());
}

#[test]
fn png_round_trip_of_quantized_image() {
    let bytes: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 37 % 256) as u8).collect();
    let img = LdrImage::<f64>::from_bytes(5, 4, &bytes).unwrap();
    let back: LdrImage<f64> = png::decode_png(&png::encode_png(&img).unwrap()).unwrap();
    assert_eq!(back.to_bytes(), bytes);
}

/// `|decoded - original| <= 0.5/256 · 2^(e - 128)` for every channel, where
/// `e` is the stored shared exponent.
fn within_rgbe_bound(orig: [f32; 3], px: rgbe::RgbePixel) -> bool {
    let dec = px.decode();
    let bound = if px.e == 0 { 2f64.powi(-128) } else { 0.5 / 256.0 * 2f64.powi(i32::from(px.e) - 128) };
    orig.iter().zip(dec).all(|(&o, d)| (f64::from(o) - f64::from(d)).abs() <= bound * (1.0 + 1e-6))
}

#[test]
fn rgbe_file_round_trip_within_bound() {
    let img = synth::scene::<f32>(40, 9, 11).unwrap();
    let back = rgbe::decode_hdr(&rgbe::encode_hdr(&img)).unwrap();
    for (o, d) in img.pixels().iter().zip(back.pixels()) {
        let px = rgbe::RgbePixel::encode(o.map(f64::from));
        assert_eq!(px.decode(), *d);
        assert!(within_rgbe_bound(*o, px), "{o:?} -> {d:?}");
    }
}

#[test]
fn narrow_rgbe_images_use_flat_scanlines() {
    let img = RadianceMap::<f32>::from_fn(3, 2, |x, y| [x as f32, y as f32 + 0.5, 2.0]).unwrap();
    let bytes = rgbe::encode_hdr(&img);
    assert_eq!(bytes.len(), header_len(&bytes, 4) + 3 * 2 * 4);
    assert!(rgbe::decode_hdr(&bytes).is_ok());
}

proptest! {
    #[test]
    fn rgbe_pixels_within_bound(r in 0f32..1e6, g in 0f32..1e6, b in 0f32..1e6, k in -20i32..20) {
        let s = 2f32.powi(k);
        let orig = [r * s, g * s, b * s];
        prop_assert!(within_rgbe_bound(orig, rgbe::RgbePixel::encode(orig.map(f64::from))));
    }
}
