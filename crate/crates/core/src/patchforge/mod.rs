//! Patch dataset generation from a single source image.
//!
//! Each patch is produced by a fixed seven-step pipeline:
//!
//! 1. random square crop of side `0.5 * min(H, W)`;
//! 2. random resized crop (area fraction in `rrc_scale`, aspect ratio in
//!    [3/4, 4/3]) resampled to `round(1.42 * P)`;
//! 3. random rotation and x-shear;
//! 4. vertical flip, 5. horizontal flip;
//! 6. center crop to `P x P`;
//! 7. color jitter applied with probability `jitter_prob`.
//!
//! All randomness for patch `i` comes from a stream keyed by
//! `(global_seed, i)`, so patches can be produced in any order or in parallel.

mod jitter;
mod raster;
mod source;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use jitter::{JitterOp, JitterStrengths};
pub use raster::{resize_region, Raster, Region};
pub use source::{make_noise_image, pixel_hash, LoadOptions, SourceImage, SourceInfo};

use crate::data::packed::{self, PackedImages};
use crate::error::{Error, Result};
use crate::seed;

pub const PATCH_FORMAT_VERSION: u32 = 1;
pub const PATCH_FILE: &str = "patches.sid";
pub const MANIFEST_FILE: &str = "manifest.json";

const RRC_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);
const RRC_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    pub patch_size: usize,
    pub count: usize,
    pub global_seed: u64,
    pub jitter_strengths: JitterStrengths,
    pub affine_degrees: f64,
    pub affine_shear: f64,
    pub rrc_scale: (f64, f64),
    pub flip_prob: f64,
    pub jitter_prob: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 32,
            count: 50_000,
            global_seed: 0,
            jitter_strengths: JitterStrengths::default(),
            affine_degrees: 30.0,
            affine_shear: 30.0,
            rrc_scale: (2e-3, 1.0),
            flip_prob: 0.5,
            jitter_prob: 0.5,
        }
    }
}

impl PatchConfig {
    /// Side length of the intermediate resized crop.
    pub fn resized_side(&self) -> usize {
        (1.42 * self.patch_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::config("patch size must be positive"));
        }
        if self.count == 0 {
            return Err(Error::config("patch count must be positive"));
        }
        let (lo, hi) = self.rrc_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::config(format!(
                "rrc_scale must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
            )));
        }
        for (name, p) in [("flip_prob", self.flip_prob), ("jitter_prob", self.jitter_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.affine_degrees < 0.0 || !(0.0..90.0).contains(&self.affine_shear) {
            return Err(Error::config("affine degrees must be >= 0 and shear in [0, 90)"));
        }
        Ok(())
    }

    pub fn check_source(&self, src: &SourceImage) -> Result<()> {
        let need = 2 * self.patch_size;
        if src.height < need || src.width < need {
            return Err(Error::precondition(format!(
                "source '{}' is {}x{}, needs at least {need}x{need} for patch size {}",
                src.name, src.height, src.width, self.patch_size
            )));
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Random-resized-crop box inside a `side`x`side` square.
fn sample_rrc_box<R: Rng>(side: usize, scale: (f64, f64), rng: &mut R) -> Region {
    let area = (side * side) as f64;
    let (log_lo, log_hi) = (RRC_RATIO.0.ln(), RRC_RATIO.1.ln());
    for _ in 0..RRC_ATTEMPTS {
        let target = area * uniform(rng, scale.0, scale.1);
        let aspect = uniform(rng, log_lo, log_hi).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= side && h <= side {
            let top = rng.random_range(0..=side - h);
            let left = rng.random_range(0..=side - w);
            return Region { top, left, height: h, width: w };
        }
    }
    // A square input is always within the ratio bounds, so fall back to all of it.
    Region { top: 0, left: 0, height: side, width: side }
}

/// Produce patch `index` as `P x P x 3` bytes.
pub fn generate_patch(src: &SourceImage, index: u64, cfg: &PatchConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    cfg.check_source(src)?;
    Ok(patch_unchecked(src, index, cfg))
}

fn patch_unchecked(src: &SourceImage, index: u64, cfg: &PatchConfig) -> Vec<u8> {
    let mut rng = seed::stream(cfg.global_seed, index);

    // 1. random crop of half the short side
    let side = src.height.min(src.width) / 2;
    let top = rng.random_range(0..=src.height - side);
    let left = rng.random_range(0..=src.width - side);

    // 2. random resized crop, composed with step 1 so the crop is never materialized
    let inner = sample_rrc_box(side, cfg.rrc_scale, &mut rng);
    let region = Region {
        top: top + inner.top,
        left: left + inner.left,
        ..inner
    };
    let s = cfg.resized_side();
    let resized = raster::resize_region(src, region, s, s);

    // 3. rotation + shear
    let angle = uniform(&mut rng, -cfg.affine_degrees, cfg.affine_degrees);
    let shear = uniform(&mut rng, -cfg.affine_shear, cfg.affine_shear);
    let mut img = raster::affine(&resized, angle, shear);

    // 4-5. flips
    if rng.random::<f64>() < cfg.flip_prob {
        img.flip_vertical();
    }
    if rng.random::<f64>() < cfg.flip_prob {
        img.flip_horizontal();
    }

    // 6. center crop
    let mut patch = img.center_crop(cfg.patch_size);

    // 7. color jitter
    if rng.random::<f64>() < cfg.jitter_prob {
        for op in jitter::sample_ops(&cfg.jitter_strengths, &mut rng) {
            jitter::apply(&mut patch, op);
        }
    }
    patch.to_u8()
}

/// Sidecar describing how a patch dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchManifest {
    pub format_version: u32,
    pub kind: String,
    pub source: SourceInfo,
    pub config: PatchConfig,
    pub count: usize,
    pub data_file: String,
    pub data_sha256: String,
}

#[derive(Debug, Clone)]
pub struct PatchDataset {
    pub records: PackedImages,
    pub manifest: PatchManifest,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.records.count
    }

    pub fn is_empty(&self) -> bool {
        self.records.count == 0
    }

    /// Load a dataset directory written by [`generate_dataset`].
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: PatchManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).map_err(|e| {
            Error::Load {
                path: dir.join(MANIFEST_FILE),
                reason: e.to_string(),
            }
        })?)?;
        if manifest.format_version != PATCH_FORMAT_VERSION {
            return Err(Error::format(
                "patch manifest",
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        let records = packed::read_sid(dir.join(&manifest.data_file))?;
        if records.count != manifest.count {
            return Err(Error::format("patch dataset", "record count disagrees with manifest"));
        }
        Ok(Self { records, manifest })
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Also write every record as `png/NNNNNN.png`.
    pub png: bool,
}

const CHUNK: usize = 1024;

/// Generate `cfg.count` patches and persist them under `out_dir`.
///
/// Output appears atomically: records are streamed to a temporary file that
/// is renamed into place only after the manifest is written. Any failure
/// removes the partial output.
pub fn generate_dataset(
    src: &SourceImage,
    cfg: &PatchConfig,
    out_dir: impl AsRef<Path>,
    opts: &GenerateOptions,
) -> Result<PatchDataset> {
    cfg.validate()?;
    cfg.check_source(src)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let tmp = out_dir.join(format!("{PATCH_FILE}.partial"));
    let result = write_dataset(src, cfg, out_dir, &tmp, opts);
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
        let _ = fs::remove_file(out_dir.join(MANIFEST_FILE));
        if opts.png {
            let _ = fs::remove_dir_all(out_dir.join("png"));
        }
    }
    result
}

fn write_dataset(
    src: &SourceImage,
    cfg: &PatchConfig,
    out_dir: &Path,
    tmp: &Path,
    opts: &GenerateOptions,
) -> Result<PatchDataset> {
    let records = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(|| generate_records(src, cfg)),
        None => generate_records(src, cfg),
    };

    let mut w = BufWriter::new(fs::File::create(tmp)?);
    packed::write_sid_header(&mut w, records.count, records.height, records.width, records.channels)?;
    w.write_all(&records.data)?;
    w.flush()?;
    drop(w);

    if opts.png {
        write_pngs(&records, &out_dir.join("png"))?;
    }

    let data_sha256 = crate::util::sha256_file(tmp)?;
    let manifest = PatchManifest {
        format_version: PATCH_FORMAT_VERSION,
        kind: "patches".into(),
        source: src.info(),
        config: cfg.clone(),
        count: records.count,
        data_file: PATCH_FILE.into(),
        data_sha256,
    };
    crate::util::write_json(out_dir.join(MANIFEST_FILE), &manifest)?;
    fs::rename(tmp, out_dir.join(PATCH_FILE))?;
    Ok(PatchDataset { records, manifest })
}

/// Generate all records in index order, in memory.
pub fn generate_records(src: &SourceImage, cfg: &PatchConfig) -> PackedImages {
    let p = cfg.patch_size;
    let mut out = PackedImages::with_capacity(p, p, 3, cfg.count);
    let mut start = 0;
    while start < cfg.count {
        let end = (start + CHUNK).min(cfg.count);
        let chunk: Vec<Vec<u8>> = (start..end)
            .into_par_iter()
            .map(|i| patch_unchecked(src, i as u64, cfg))
            .collect();
        for rec in &chunk {
            out.push(rec);
        }
        start = end;
    }
    out
}

pub fn write_pngs(records: &PackedImages, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    (0..records.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let img = image::RgbImage::from_raw(records.width as u32, records.height as u32, records.record(i).to_vec())
            .ok_or_else(|| Error::format("patch", "record is not RGB"))?;
        img.save(dir.join(format!("{i:06}.png")))?;
        Ok(())
    })
}

pub fn dataset_path(dir: &Path) -> PathBuf {
    dir.join(PATCH_FILE)
}
