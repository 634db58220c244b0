use itm_core::metrics::pu::{PU_KNOTS, PU_KNOT_START, PU_KNOT_STEP};
use itm_core::metrics::{evaluate_hdr, ms_ssim, pu_encode, pu_value, ssim, PU_DYNAMIC_RANGE};
use itm_core::{luminance, rng, synth, LumaMap};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Daly's contrast sensitivity at spatial frequency `rho` (cy/deg) and
/// adaptation luminance `l` (cd/m²).
fn csf(rho: f64, l: f64) -> f64 {
    let a = 0.801 * (1.0 + 0.7 / l).powf(-0.2);
    let b = 0.3 * (1.0 + 100.0 / l).powf(0.15);
    let e = 0.9;
    ((3.23 * (rho * rho).powf(-0.3)).powi(5) + 1.0).powf(-0.2)
        * a
        * e
        * rho
        * (-b * e * rho).exp()
        * (1.0 + 0.06 * (b * e * rho).exp()).sqrt()
}

/// Peak sensitivity over frequency by golden-section search in log frequency.
fn peak(l: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.01f64.ln(), 60f64.ln());
    let f = |t: f64| csf(t.exp(), l);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-10 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    f(0.5 * (lo + hi))
}

/// `∫ peak(e^t) dt` from `ln 1e-5` to `ln l`, composite Simpson.
fn integral(l: f64) -> f64 {
    let (a, b) = (1e-5f64.ln(), l.ln());
    let n = 2 * (((b - a) / 0.01).ceil() as usize).max(1);
    let h = (b - a) / n as f64;
    let mut s = peak(a.exp()) + peak(b.exp());
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * peak((a + i as f64 * h).exp());
    }
    s * h / 3.0
}

fn oracle_code(l: f64, p0: f64, p1: f64) -> f64 {
    255.0 * (integral(l) - p0) / (p1 - p0)
}

#[test]
fn pu_table_matches_independent_integration() {
    let (p0, p1) = (integral(0.1), integral(80.0));
    for (i, &knot) in PU_KNOTS.iter().enumerate() {
        let l = 10f64.powf(PU_KNOT_START + PU_KNOT_STEP * i as f64);
        let want = oracle_code(l, p0, p1);
        assert!((knot - want).abs() < 1e-3 * want.abs().max(1.0), "knot {i}: table {knot} oracle {want}");
    }
    // calibration anchors of the encoding, within two code values
    assert!(pu_value(0.1).abs() <= 2.0);
    assert!((pu_value(80.0) - 255.0).abs() <= 2.0);
}

#[test]
fn pu_is_monotone_over_random_pairs() {
    let mut r = rng::seeded(17);
    for _ in 0..100_000 {
        let a = 10f64.powf(r.random_range(-6.0..11.0));
        let b = 10f64.powf(r.random_range(-6.0..11.0));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        assert!(pu_value(lo) <= pu_value(hi), "pu({lo}) > pu({hi})");
    }
}

fn pu_scene(seed: u64) -> LumaMap<f64> {
    pu_encode(&luminance(&synth::scene::<f64>(64, 64, seed).unwrap()))
}

fn noisy(m: &LumaMap<f64>, sigma: f64, seed: u64) -> LumaMap<f64> {
    let mut r = rng::seeded(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    LumaMap::signed(m.width(), m.height(), m.data().iter().map(|v| v + n.sample(&mut r)).collect()).unwrap()
}

#[test]
fn ms_ssim_identity_and_exact_symmetry() {
    for seed in 0..3 {
        let a = pu_scene(seed);
        let b = noisy(&a, 8.0, seed + 100);
        assert!((ms_ssim(&a, &a, PU_DYNAMIC_RANGE).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(
            ms_ssim(&a, &b, PU_DYNAMIC_RANGE).unwrap().to_bits(),
            ms_ssim(&b, &a, PU_DYNAMIC_RANGE).unwrap().to_bits()
        );
        assert_eq!(
            ssim(&a, &b, PU_DYNAMIC_RANGE).unwrap().to_bits(),
            ssim(&b, &a, PU_DYNAMIC_RANGE).unwrap().to_bits()
        );
    }
}

#[test]
fn ms_ssim_falls_with_noise() {
    let a = pu_scene(4);
    let scores: Vec<f64> =
        [1.0, 4.0, 16.0].iter().map(|&s| ms_ssim(&a, &noisy(&a, s, 9), PU_DYNAMIC_RANGE).unwrap()).collect();
    assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    assert!(scores.iter().all(|s| (0.0..1.0).contains(s)));
}

#[test]
fn evaluate_hdr_rejects_size_mismatch() {
    let a = synth::scene::<f64>(32, 32, 1).unwrap();
    let b = synth::scene::<f64>(32, 16, 1).unwrap();
    assert!(evaluate_hdr(&a, &b).is_err());
}
