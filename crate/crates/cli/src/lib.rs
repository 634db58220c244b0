//! Command-line frontend: tone mapping, inverse tone mapping, virtual-camera
//! synthesis, dataset generation, training, prediction and evaluation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use itm_core::camera::{capture, sample_crf_params, sample_exposure_offset, CrfParams, EXPOSURE_RANGE};
use itm_core::dataset::{load_dataset, make_pair, write_pair, PairOptions};
use itm_core::image::{ColorImage, DEFAULT_EPS};
use itm_core::io::{self, pfm, png, weights};
use itm_core::metrics::evaluate_hdr;
use itm_core::reinhard::DEFAULT_KEY;
use itm_core::unet::{PairSource, TrainHyper};
use itm_core::{inverse_tonemap, rng, tonemap_forward, Error, LdrImage, RadianceMap, UNet, UNetConfig};

#[derive(Debug, Parser)]
#[command(name = "itm", version, about = "Inverse tone mapping through Reinhard-targeted LDR learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ToneArgs {
    /// Reinhard key value, in (0, 1]
    #[arg(long, default_value_t = DEFAULT_KEY)]
    pub a: f64,
    /// Floor applied to luminance inside the geometric mean
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tone-map an HDR image (.hdr/.pfm) with Reinhard's global operator
    Tonemap {
        input: PathBuf,
        /// Output .png (8-bit) or .pfm (continuous)
        output: PathBuf,
        #[command(flatten)]
        tone: ToneArgs,
    },
    /// Invert the Reinhard operator on an LDR image, recovering absolute scale
    Itm {
        /// Input .png or .pfm with values in [0, 1]
        input: PathBuf,
        /// Output .hdr or .pfm
        output: PathBuf,
        #[command(flatten)]
        tone: ToneArgs,
        /// Use this geometric mean instead of recovering it from zero pixels
        #[arg(long)]
        g_override: Option<f64>,
    },
    /// Simulate a camera capture of an HDR image
    SynthLdr {
        input: PathBuf,
        /// Output .png or .pfm
        output: PathBuf,
        /// Exposure offset in stops, in [-4, 4]; drawn from the seed if omitted
        #[arg(long, allow_hyphen_values = true)]
        v: Option<f64>,
        /// Response curve parameter eta; drawn from the seed if omitted
        #[arg(long)]
        eta: Option<f64>,
        /// Response curve exponent gamma; drawn from the seed if omitted
        #[arg(long)]
        gamma: Option<f64>,
        /// Seed for any parameter not given explicitly
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Generate training pairs from a directory of HDR images
    MakeDataset {
        hdr_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        pairs_per_image: usize,
        /// Patch side in pixels
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        seed: u64,
        /// Round camera inputs to 8-bit levels
        #[arg(long)]
        quantize: bool,
        #[command(flatten)]
        tone: ToneArgs,
    },
    /// Train the network on a dataset directory or a directory of HDR images
    Train {
        input: PathBuf,
        weights_out: PathBuf,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        /// Channel scale as N/D or an integer
        #[arg(long, default_value = "1/8")]
        scale: String,
        /// Input side in pixels
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 32)]
        base_channels: u32,
        #[arg(long, default_value_t = 5)]
        depth: u32,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long)]
        seed: u64,
        /// Round camera inputs to 8-bit levels (HDR-directory input only)
        #[arg(long)]
        quantize: bool,
        /// Write the per-epoch report here
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        tone: ToneArgs,
    },
    /// Reconstruct HDR from an LDR image with a trained network
    Predict {
        weights: PathBuf,
        /// Input .png or .pfm; sides must be divisible by 2^depth
        input: PathBuf,
        /// Output .hdr or .pfm
        output: PathBuf,
        #[command(flatten)]
        tone: ToneArgs,
        #[arg(long)]
        g_override: Option<f64>,
        /// Also write the network's LDR prediction (.png or .pfm)
        #[arg(long)]
        ldr_out: Option<PathBuf>,
    },
    /// Score an HDR prediction against a reference with PU-encoded MS-SSIM
    Eval {
        pred: PathBuf,
        reference: PathBuf,
        /// Write the key=value report here as well as to stdout
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List the tensors of a weight file
    Inspect { weights: PathBuf },
    /// Write a procedural HDR test scene (.hdr or .pfm)
    Scene {
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long)]
        seed: u64,
    },
}

/// Exit codes by failure category.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const SCALE: i32 = 5;
    pub const INVALID: i32 = 6;
    pub const TRAINING: i32 = 7;
}

/// Category name and exit code for an error chain.
pub fn classify(err: &anyhow::Error) -> (&'static str, i32) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } | Error::RawIo(_) => ("io", exit::IO),
                Error::Codec(_) | Error::Integrity { .. } => ("format", exit::FORMAT),
                Error::ScaleUnrecoverable { .. } | Error::ScaleDegenerate { .. } => ("scale", exit::SCALE),
                Error::NonFiniteLoss { .. } => ("training", exit::TRAINING),
                _ => ("invalid", exit::INVALID),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", exit::IO);
        }
    }
    ("error", exit::OTHER)
}

fn init_logging() {
    use std::io::Write;
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| writeln!(buf, "level={} {}", rec.level().as_str().to_ascii_lowercase(), rec.args()))
        .try_init();
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            let (cat, code) = classify(&e);
            eprintln!("error[{cat}]: {}", describe(&e));
            code
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn check_key(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        bail!(Error::InvalidParameter { name: "a", value: a, reason: "key value must lie in (0, 1]" });
    }
    Ok(())
}

fn read_ldr(path: &Path) -> Result<LdrImage<f64>> {
    match io::extension(path).as_str() {
        "png" => Ok(png::read_png(path)?),
        "pfm" => {
            let img = pfm::read_pfm(path)?;
            let (w, h) = img.dims();
            let px = img.into_pixels().into_iter().map(|p| p.map(f64::from)).collect();
            LdrImage::new(w, h, px).with_context(|| format!("{} is not an LDR image", path.display()))
        }
        other => bail!(Error::InvalidParameter { name: "ldr extension", value: f64::NAN, reason: ext_hint(other) }),
    }
}

fn ext_hint(ext: &str) -> &'static str {
    if ext.is_empty() {
        "missing file extension; use .png or .pfm"
    } else {
        "unsupported LDR extension; use .png or .pfm"
    }
}

fn write_ldr(path: &Path, img: &LdrImage<f64>) -> Result<()> {
    match io::extension(path).as_str() {
        "png" => Ok(png::write_png(path, img)?),
        "pfm" => {
            let (w, h) = img.dims();
            Ok(pfm::write_pfm(path, &RadianceMap::new(w, h, img.pixels().to_vec())?)?)
        }
        other => bail!(Error::InvalidParameter { name: "ldr extension", value: f64::NAN, reason: ext_hint(other) }),
    }
}

fn read_hdr(path: &Path) -> Result<RadianceMap<f64>> {
    Ok(io::read_radiance(path)?.cast())
}

fn parse_scale(s: &str) -> Result<(u32, u32)> {
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: u32 = n.trim().parse().with_context(|| format!("bad --scale {s:?}"))?;
    let d: u32 = d.trim().parse().with_context(|| format!("bad --scale {s:?}"))?;
    if n == 0 || d == 0 {
        bail!(Error::InvalidParameter { name: "scale", value: 0.0, reason: "scale must be a positive ratio" });
    }
    Ok((n, d))
}

fn hdr_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(io::extension(p).as_str(), "hdr" | "pic" | "rgbe" | "pfm"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(Error::InvalidParameter { name: "input", value: 0.0, reason: "directory holds no .hdr or .pfm files" });
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn is_dataset(dir: &Path) -> bool {
    let Ok(entries) = fs::read_dir(dir) else { return false };
    entries.filter_map(|e| e.ok()).any(|e| {
        e.path().is_dir()
            && fs::read_dir(e.path())
                .map(|mut it| it.any(|f| f.is_ok_and(|f| f.file_name().to_string_lossy().ends_with(".txt"))))
                .unwrap_or(false)
    })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Tonemap { input, output, tone } => {
            check_key(tone.a)?;
            let hdr = read_hdr(&input)?;
            let (ldr, p) = tonemap_forward(&hdr, tone.a, tone.eps)?;
            write_ldr(&output, &ldr)?;
            info!("event=tonemap input={} output={} a={} g={:e}", input.display(), output.display(), p.a, p.g);
        }
        Command::Itm { input, output, tone, g_override } => {
            check_key(tone.a)?;
            let ldr = read_ldr(&input)?;
            let hdr = inverse_tonemap(&ldr, tone.a, tone.eps, g_override)?;
            io::write_radiance(&output, &hdr)?;
            info!(
                "event=itm input={} output={} a={} g_override={g_override:?}",
                input.display(),
                output.display(),
                tone.a
            );
        }
        Command::SynthLdr { input, output, v, eta, gamma, seed, eps } => {
            if seed.is_none() && (v.is_none() || eta.is_none() || gamma.is_none()) {
                bail!(Error::InvalidParameter {
                    name: "seed",
                    value: f64::NAN,
                    reason: "--seed is required unless --v, --eta and --gamma are all given",
                });
            }
            let mut r = rng::seeded(seed.unwrap_or(0));
            let drawn_v = sample_exposure_offset(&mut r);
            let drawn = sample_crf_params(&mut r);
            let v = v.unwrap_or(drawn_v);
            if v.abs() > EXPOSURE_RANGE {
                bail!(Error::InvalidParameter { name: "v", value: v, reason: "exposure offset must lie in [-4, 4]" });
            }
            let crf = CrfParams::new(eta.unwrap_or(drawn.eta), gamma.unwrap_or(drawn.gamma))?;
            let hdr = read_hdr(&input)?;
            let ldr = capture(&hdr, v, &crf, eps)?;
            write_ldr(&output, &ldr)?;
            info!(
                "event=synth_ldr input={} output={} v={v} eta={} gamma={} seed={seed:?}",
                input.display(),
                output.display(),
                crf.eta,
                crf.gamma
            );
        }
        Command::MakeDataset { hdr_dir, out_dir, pairs_per_image, size, seed, quantize, tone } => {
            check_key(tone.a)?;
            let files = hdr_files(&hdr_dir)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::Io { path: out_dir.clone(), source: e })?;
            let opts = PairOptions { out_size: size, a: tone.a, eps: tone.eps, quantize_x: quantize };
            for (i, f) in files.iter().enumerate() {
                let hdr = io::read_radiance(f)?;
                let name = stem(f);
                for j in 0..pairs_per_image {
                    let pair = make_pair(&hdr, &name, rng::derive_seed(seed, &[i as u64, j as u64]), &opts)?;
                    write_pair(&out_dir, j, &pair)?;
                }
                info!("event=dataset_image source={name} pairs={pairs_per_image} size={size}");
            }
            info!("event=dataset_done images={} out={} seed={seed}", files.len(), out_dir.display());
        }
        Command::Train {
            input,
            weights_out,
            epochs,
            scale,
            size,
            base_channels,
            depth,
            batch,
            seed,
            quantize,
            report,
            tone,
        } => {
            check_key(tone.a)?;
            let (scale_num, scale_den) = parse_scale(&scale)?;
            let config = UNetConfig { base_channels, depth, input_size: size, scale_num, scale_den };
            let mut net = UNet::<f32>::build(config, seed)?;
            info!("event=train_start config=\"{config}\" params={} seed={seed} epochs={epochs}", net.param_count());
            let hyper = TrainHyper {
                epochs,
                batch_size: batch,
                a: tone.a,
                seed,
                eps: tone.eps,
                quantize_x: quantize,
                ..Default::default()
            };
            let log_epoch = |e: &itm_core::unet::EpochStats| {
                info!("event=epoch epoch={} mean_loss={:.9} iterations={}", e.epoch, e.mean_loss, e.iterations)
            };
            let rep = if is_dataset(&input) {
                let pairs = load_dataset(&input)?;
                if let Some(p) = pairs.iter().find(|p| p.x.width() != size as usize || p.x.height() != size as usize) {
                    bail!(Error::DimensionMismatch {
                        expected: format!("{size}x{size}"),
                        found: format!("{}x{}", p.x.width(), p.x.height()),
                    });
                }
                net.train(PairSource::Pairs(&pairs), &hyper, log_epoch)?
            } else {
                let imgs = hdr_files(&input)?
                    .iter()
                    .map(|f| Ok((stem(f), io::read_radiance(f)?)))
                    .collect::<Result<Vec<_>>>()?;
                net.train(PairSource::Images(&imgs), &hyper, log_epoch)?
            };
            weights::save_weights(&weights_out, &net)?;
            if let Some(path) = report {
                fs::write(&path, rep.to_text()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            info!(
                "event=train_done weights={} iterations={} wall_seconds={:.3} final_loss={}",
                weights_out.display(),
                rep.iterations,
                rep.wall_time.as_secs_f64(),
                rep.epoch_losses.last().map_or("none".to_string(), |l| format!("{l:.9}"))
            );
        }
        Command::Predict { weights: wpath, input, output, tone, g_override, ldr_out } => {
            check_key(tone.a)?;
            let net = weights::load_weights(&wpath, None)?.cast::<f64>();
            let x = read_ldr(&input)?;
            let y_hat = net.predict(&x)?;
            if let Some(p) = &ldr_out {
                write_ldr(p, &y_hat)?;
            }
            let hdr = net.predict_hdr(&x, tone.a, tone.eps, g_override)?;
            io::write_radiance(&output, &hdr)?;
            info!("event=predict weights={} input={} output={}", wpath.display(), input.display(), output.display());
        }
        Command::Eval { pred, reference, report } => {
            let r = evaluate_hdr(&read_hdr(&pred)?, &read_hdr(&reference)?)?;
            let text = r.to_text();
            print!("{text}");
            if let Some(path) = report {
                fs::write(&path, &text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            info!("event=eval pu_msssim={:.9} scales={}", r.pu_msssim, r.scales);
        }
        Command::Inspect { weights: wpath } => {
            let net = weights::load_weights(&wpath, None)?;
            println!("config=\"{}\" tensors={} params={}", net.config(), net.params().len(), net.param_count());
            for (name, dims) in net.manifest() {
                let d: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
                println!("{name} {}", d.join("x"));
            }
        }
        Command::Scene { output, width, height, seed } => {
            let img = itm_core::synth::scene::<f32>(width, height, seed)?;
            io::write_radiance(&output, &img)?;
            info!("event=scene output={} width={width} height={height} seed={seed}", output.display());
        }
    }
    Ok(())
}
