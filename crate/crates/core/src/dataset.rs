//! Training-pair factory: random crops of HDR sources, a virtual-camera
//! input and a Reinhard target for each, plus epoch scheduling and the
//! on-disk pair layout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::camera::{capture, sample_crf_params, sample_exposure_offset, CrfParams};
use crate::error::{Error, Result};
use crate::image::{ColorImage, LdrImage, RadianceMap, Rgb};
use crate::io::pfm;
use crate::reinhard::{tonemap_forward, DEFAULT_KEY};
use crate::rng;
use crate::scalar::Scalar;

pub const MIN_CROP: usize = 8;
/// Crop side as a fraction of the source's short side.
pub const CROP_FRACTION: [f64; 2] = [0.2, 0.6];
pub const DEFAULT_PATCH_SIZE: usize = 64;
/// Patch size of the full-scale setup.
pub const FULL_PATCH_SIZE: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    /// Side length of the square crop.
    pub n: usize,
}

/// Geometry of one random patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub crop: Crop,
    pub flip_v: bool,
    pub flip_h: bool,
}

fn check_source(width: usize, height: usize) -> Result<()> {
    if width < MIN_CROP || height < MIN_CROP {
        return Err(Error::InvalidImage(format!(
            "source {width}x{height} is smaller than the minimum {MIN_CROP}x{MIN_CROP}"
        )));
    }
    Ok(())
}

fn check_out_size(out_size: usize) -> Result<()> {
    if out_size < MIN_CROP {
        return Err(Error::InvalidParameter {
            name: "out_size",
            value: out_size as f64,
            reason: "patch size must be at least 8",
        });
    }
    Ok(())
}

pub fn sample_patch_spec<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Result<PatchSpec> {
    check_source(width, height)?;
    let short = width.min(height);
    let u: f64 = rng.random_range(CROP_FRACTION[0]..=CROP_FRACTION[1]);
    let n = ((u * short as f64).round() as usize).clamp(MIN_CROP, short);
    let x = rng.random_range(0..=width - n);
    let y = rng.random_range(0..=height - n);
    let flip_v = rng.random_bool(0.5);
    let flip_h = rng.random_bool(0.5);
    Ok(PatchSpec { crop: Crop { x, y, n }, flip_v, flip_h })
}

/// Crops, bilinearly resizes to `out_size`², then flips.
pub fn extract_patch<T: Scalar>(src: &RadianceMap<T>, spec: &PatchSpec, out_size: usize) -> Result<RadianceMap<T>> {
    check_out_size(out_size)?;
    let Crop { x: cx, y: cy, n } = spec.crop;
    if n == 0 || cx + n > src.width() || cy + n > src.height() {
        return Err(Error::InvalidParameter {
            name: "crop",
            value: n as f64,
            reason: "crop rectangle leaves the source image",
        });
    }
    let scale = n as f64 / out_size as f64;
    // Pixel-center aligned sample positions inside the crop.
    let axis: Vec<(usize, usize, f64)> = (0..out_size)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect();
    let at = |x: usize, y: usize| -> Rgb<f64> { src.pixel(cx + x, cy + y).map(|c| c.f64()) };
    let mut pixels = Vec::with_capacity(out_size * out_size);
    for oy in 0..out_size {
        let sy = if spec.flip_v { out_size - 1 - oy } else { oy };
        let (y0, y1, fy) = axis[sy];
        for ox in 0..out_size {
            let sx = if spec.flip_h { out_size - 1 - ox } else { ox };
            let (x0, x1, fx) = axis[sx];
            let (p00, p10, p01, p11) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
            pixels.push([0, 1, 2].map(|c| {
                let top = p00[c] + fx * (p10[c] - p00[c]);
                let bottom = p01[c] + fx * (p11[c] - p01[c]);
                T::of((top + fy * (bottom - top)).max(0.0))
            }));
        }
    }
    RadianceMap::new(out_size, out_size, pixels)
}

pub fn random_patch<T: Scalar, R: Rng + ?Sized>(
    src: &RadianceMap<T>,
    rng: &mut R,
    out_size: usize,
) -> Result<(RadianceMap<T>, PatchSpec)> {
    check_out_size(out_size)?;
    let spec = sample_patch_spec(src.width(), src.height(), rng)?;
    Ok((extract_patch(src, &spec, out_size)?, spec))
}

/// Everything needed to regenerate a pair from its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub patch: PatchSpec,
    pub v: f64,
    pub crf: CrfParams,
    pub seed: u64,
}

impl Provenance {
    /// Line-oriented `key=value` sidecar text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = self.patch.crop;
        let _ = writeln!(s, "source={}", self.source);
        let _ = writeln!(s, "crop_x={}", c.x);
        let _ = writeln!(s, "crop_y={}", c.y);
        let _ = writeln!(s, "crop_n={}", c.n);
        let _ = writeln!(s, "v={}", self.v);
        let _ = writeln!(s, "eta={}", self.crf.eta);
        let _ = writeln!(s, "gamma={}", self.crf.gamma);
        let _ = writeln!(s, "flip_v={}", self.patch.flip_v);
        let _ = writeln!(s, "flip_h={}", self.patch.flip_h);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidImage(format!("provenance line without '=': {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        fn get<V: std::str::FromStr>(f: &std::collections::HashMap<&str, &str>, key: &str) -> Result<V> {
            f.get(key)
                .ok_or_else(|| Error::InvalidImage(format!("provenance missing field {key}")))?
                .parse()
                .map_err(|_| Error::InvalidImage(format!("provenance field {key} is malformed")))
        }
        Ok(Provenance {
            source: get(&fields, "source")?,
            patch: PatchSpec {
                crop: Crop { x: get(&fields, "crop_x")?, y: get(&fields, "crop_y")?, n: get(&fields, "crop_n")? },
                flip_v: get(&fields, "flip_v")?,
                flip_h: get(&fields, "flip_h")?,
            },
            v: get(&fields, "v")?,
            crf: CrfParams::new(get(&fields, "eta")?, get(&fields, "gamma")?)?,
            seed: get(&fields, "seed")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    /// Virtual-camera input.
    pub x: LdrImage<T>,
    /// Reinhard target at the default key.
    pub y: LdrImage<T>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub out_size: usize,
    /// Key value of the Reinhard target.
    pub a: f64,
    pub eps: f64,
    /// Round the camera input to 8-bit levels.
    pub quantize_x: bool,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions { out_size: DEFAULT_PATCH_SIZE, a: DEFAULT_KEY, eps: crate::image::DEFAULT_EPS, quantize_x: false }
    }
}

/// Draws patch geometry, exposure and response curve from the stream
/// `seed`, then builds the pair.
pub fn make_pair<T: Scalar>(
    src: &RadianceMap<T>,
    source: &str,
    seed: u64,
    opts: &PairOptions,
) -> Result<TrainingPair<T>> {
    check_out_size(opts.out_size)?;
    let mut rng = rng::seeded(seed);
    let patch = sample_patch_spec(src.width(), src.height(), &mut rng)?;
    let v = sample_exposure_offset(&mut rng);
    let crf = sample_crf_params(&mut rng);
    let provenance = Provenance { source: source.to_string(), patch, v, crf, seed };
    replay_pair(src, provenance, opts)
}

/// Rebuilds a pair from recorded parameters; no randomness involved.
pub fn replay_pair<T: Scalar>(
    src: &RadianceMap<T>,
    provenance: Provenance,
    opts: &PairOptions,
) -> Result<TrainingPair<T>> {
    let patch = extract_patch(src, &provenance.patch, opts.out_size)?;
    let x = capture(&patch, provenance.v, &provenance.crf, opts.eps)?;
    let x = if opts.quantize_x { x.quantize() } else { x };
    let (y, _) = tonemap_forward(&patch, opts.a, opts.eps)?;
    Ok(TrainingPair { x, y, provenance })
}

/// One epoch's shuffled batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub ordering: Vec<usize>,
    pub batch_size: usize,
    pub batches: Vec<Vec<usize>>,
}

/// Random permutation of `0..n_images` cut into full batches; the trailing
/// remainder sits out this epoch.
pub fn plan_epoch<R: Rng + ?Sized>(n_images: usize, batch_size: usize, rng: &mut R) -> Result<EpochPlan> {
    if n_images == 0 || batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: if n_images == 0 { "n_images" } else { "batch_size" },
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let mut ordering: Vec<usize> = (0..n_images).collect();
    ordering.shuffle(rng);
    let batches = ordering.chunks_exact(batch_size).map(<[usize]>::to_vec).collect();
    Ok(EpochPlan { ordering, batch_size, batches })
}

fn pair_paths(dir: &Path, index: usize) -> [PathBuf; 3] {
    [
        dir.join(format!("pair_{index:05}_x.pfm")),
        dir.join(format!("pair_{index:05}_y.pfm")),
        dir.join(format!("pair_{index:05}.txt")),
    ]
}

fn as_radiance<T: Scalar>(img: &LdrImage<T>) -> Result<RadianceMap<T>> {
    RadianceMap::new(img.width(), img.height(), img.pixels().to_vec())
}

/// Writes `pair` as two PFM files plus a provenance sidecar under
/// `root/<source>/`.
pub fn write_pair<T: Scalar>(root: &Path, index: usize, pair: &TrainingPair<T>) -> Result<()> {
    let dir = root.join(&pair.provenance.source);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let [xp, yp, tp] = pair_paths(&dir, index);
    pfm::write_pfm(&xp, &as_radiance(&pair.x)?)?;
    pfm::write_pfm(&yp, &as_radiance(&pair.y)?)?;
    fs::write(&tp, pair.provenance.to_text()).map_err(|e| Error::io(&tp, e))
}

fn to_ldr(img: RadianceMap<f32>) -> Result<LdrImage<f32>> {
    let (w, h) = img.dims();
    LdrImage::new(w, h, img.into_pixels())
}

/// Loads every pair under `root`, ordered by directory then index.
pub fn load_dataset(root: &Path) -> Result<Vec<TrainingPair<f32>>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut pairs = Vec::new();
    for dir in dirs {
        let mut sidecars: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        sidecars.sort();
        for tp in sidecars {
            let text = fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
            let provenance = Provenance::parse(&text)?;
            let stem = tp.with_extension("");
            let stem = stem.to_string_lossy();
            let x = to_ldr(pfm::read_pfm(Path::new(&format!("{stem}_x.pfm")))?)?;
            let y = to_ldr(pfm::read_pfm(Path::new(&format!("{stem}_y.pfm")))?)?;
            pairs.push(TrainingPair { x, y, provenance });
        }
    }
    Ok(pairs)
}
