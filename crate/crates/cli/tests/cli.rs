use std::path::Path;
use std::process::{Command, Output};

use itm_cli::exit;

fn itm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itm")).args(args).env("RUST_LOG", "warn").output().expect("spawn itm")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn score(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("pu_msssim=")).expect("score line");
    line["pu_msssim=".len()..].parse().unwrap()
}

#[test]
fn tonemap_then_itm_round_trips_through_pfm() {
    let d = tempfile::tempdir().unwrap();
    let (r, l, b) = (d.path().join("ref.pfm"), d.path().join("ldr.pfm"), d.path().join("back.pfm"));
    assert!(itm(&["scene", p(&r), "--seed", "42", "--width", "64", "--height", "64"]).status.success());
    assert!(itm(&["tonemap", p(&r), p(&l)]).status.success());
    assert!(itm(&["itm", p(&l), p(&b)]).status.success());
    let o = itm(&["eval", p(&b), p(&r)]);
    assert!(o.status.success());
    assert!(score(&o) > 0.999999);
}

#[test]
fn eight_bit_round_trip_stays_close() {
    let d = tempfile::tempdir().unwrap();
    let (r, l, b) = (d.path().join("ref.hdr"), d.path().join("ldr.png"), d.path().join("back.hdr"));
    assert!(itm(&["scene", p(&r), "--seed", "7", "--width", "64", "--height", "64"]).status.success());
    assert!(itm(&["tonemap", p(&r), p(&l)]).status.success());
    assert!(itm(&["itm", p(&l), p(&b)]).status.success());
    // 8-bit highlights perturb the recovered scale, so this is looser than
    // the continuous round trip
    assert!(score(&itm(&["eval", p(&b), p(&r)])) > 0.8);
}

#[test]
fn eval_of_identical_images_is_one() {
    let d = tempfile::tempdir().unwrap();
    let r = d.path().join("ref.pfm");
    let rep = d.path().join("report.txt");
    assert!(itm(&["scene", p(&r), "--seed", "1", "--width", "48", "--height", "48"]).status.success());
    let o = itm(&["eval", p(&r), p(&r), "--report", p(&rep)]);
    assert_eq!(score(&o), 1.0);
    assert_eq!(std::fs::read_to_string(&rep).unwrap(), stdout(&o));
}

#[test]
fn untrained_network_runs_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let hdr = d.path().join("hdr");
    std::fs::create_dir(&hdr).unwrap();
    for s in 0..2 {
        let f = hdr.join(format!("s{s}.pfm"));
        assert!(itm(&["scene", p(&f), "--seed", &s.to_string(), "--width", "64", "--height", "64"]).status.success());
    }
    let w = d.path().join("net.itmw");
    let o = itm(&["train", p(&hdr), p(&w), "--epochs", "0", "--seed", "3", "--size", "32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = itm(&["inspect", p(&w)]);
    assert!(stdout(&o).contains("out.weight"));

    let (x, y, out) = (d.path().join("x.pfm"), d.path().join("y.pfm"), d.path().join("out.pfm"));
    assert!(itm(&["synth-ldr", p(&hdr.join("s0.pfm")), p(&x), "--seed", "5"]).status.success());
    let o = itm(&["predict", p(&w), p(&x), p(&out), "--g-override", "0.3", "--ldr-out", p(&y)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists() && y.exists());
}

#[test]
fn help_documents_the_default_key() {
    let o = itm(&["tonemap", "--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.18"));
}

#[test]
fn exit_codes_follow_the_failure() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.pfm");
    let out = d.path().join("o.png");
    assert_eq!(itm(&["tonemap", p(&missing), p(&out)]).status.code(), Some(exit::IO));
    assert_eq!(itm(&["frobnicate"]).status.code(), Some(exit::USAGE));

    let bad = d.path().join("bad.pfm");
    std::fs::write(&bad, b"PF\n2 2\n-1.0\nshort").unwrap();
    let o = itm(&["tonemap", p(&bad), p(&out)]);
    assert_eq!(o.status.code(), Some(exit::FORMAT));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[format]"));

    let r = d.path().join("r.pfm");
    assert!(itm(&["scene", p(&r), "--seed", "1", "--width", "16", "--height", "16"]).status.success());
    assert_eq!(itm(&["tonemap", p(&r), p(&out), "--a", "2"]).status.code(), Some(exit::INVALID));

    let gray = d.path().join("gray.pfm");
    let mut bytes = b"PF\n2 1\n-1.0\n".to_vec();
    for _ in 0..6 {
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
    }
    std::fs::write(&gray, bytes).unwrap();
    let o = itm(&["itm", p(&gray), p(&d.path().join("g.pfm"))]);
    assert_eq!(o.status.code(), Some(exit::SCALE));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--g-override"));
}
