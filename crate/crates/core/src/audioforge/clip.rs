use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::augment::{AudioAug, AudioOpKind};
use super::dsp;
use crate::error::{Error, Result};
use crate::seed;

/// Rate every source is converted to on load.
pub const TARGET_RATE: u32 = 16_000;

/// A mono source recording with samples in [-1, 1].
#[derive(Clone)]
pub struct SourceClip {
    pub name: String,
    pub sample_rate: u32,
    samples: Vec<f32>,
    content_hash: String,
}

impl std::fmt::Debug for SourceClip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceClip")
            .field("name", &self.name)
            .field("sample_rate", &self.sample_rate)
            .field("duration", &self.duration())
            .field("content_hash", &self.content_hash)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub name: String,
    pub sample_rate: u32,
    pub samples: usize,
    pub content_hash: String,
}

fn samples_hash(rate: u32, samples: &[f32]) -> String {
    let mut h = Sha256::new();
    h.update(rate.to_le_bytes());
    for s in samples {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl SourceClip {
    pub fn from_samples(name: impl Into<String>, sample_rate: u32, samples: Vec<f32>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::precondition("sample rate must be positive"));
        }
        let samples: Vec<f32> = samples
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        let content_hash = samples_hash(sample_rate, &samples);
        Ok(Self {
            name: name.into(),
            sample_rate,
            samples,
            content_hash,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn info(&self) -> ClipInfo {
        ClipInfo {
            name: self.name.clone(),
            sample_rate: self.sample_rate,
            samples: self.samples.len(),
            content_hash: self.content_hash.clone(),
        }
    }

    /// Decode a WAV file, mix down to mono and resample to 16 kHz.
    pub fn load_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (rate, mono) = read_wav_mono(path)?;
        let samples = dsp::resample(&mono, rate, TARGET_RATE);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "clip".into());
        Self::from_samples(name, TARGET_RATE, samples)
    }
}

/// Read any PCM/float WAV as mono f32 at its native rate.
pub fn read_wav_mono(path: &Path) -> Result<(u32, Vec<f32>)> {
    let load_err = |e: hound::Error| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut reader = hound::WavReader::open(path).map_err(load_err)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>().map_err(load_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()
                .map_err(load_err)?
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok((spec.sample_rate, mono))
}

pub fn write_wav(path: &Path, rate: u32, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for &s in samples {
        w.write_sample(s).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.finalize().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipConfig {
    pub count: usize,
    pub segment_seconds: f64,
    pub global_seed: u64,
    /// Candidate operations, sampled uniformly per clip.
    pub ops: Vec<AudioOpKind>,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            count: 50_000,
            segment_seconds: 2.0,
            global_seed: 0,
            ops: AudioOpKind::ALL.to_vec(),
        }
    }
}

impl ClipConfig {
    pub fn segment_samples(&self, rate: u32) -> usize {
        (self.segment_seconds * rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("clip count must be positive"));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::config("segment length must be positive"));
        }
        if self.ops.is_empty() {
            return Err(Error::config("at least one augmentation op is required"));
        }
        Ok(())
    }

    pub fn check_source(&self, src: &SourceClip) -> Result<()> {
        let need = self.segment_samples(src.sample_rate);
        if src.samples.len() < need {
            return Err(Error::precondition(format!(
                "clip '{}' lasts {:.3} s, shorter than the {} s segment",
                src.name,
                src.duration(),
                self.segment_seconds
            )));
        }
        Ok(())
    }
}

/// One generated segment and the augmentation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedClip {
    pub start: usize,
    pub aug: AudioAug,
    pub samples: Vec<f32>,
}

/// Random crop of `segment_seconds` plus one uniformly chosen augmentation.
pub fn generate_clip(src: &SourceClip, index: u64, cfg: &ClipConfig) -> Result<GeneratedClip> {
    cfg.validate()?;
    cfg.check_source(src)?;
    Ok(clip_unchecked(src, index, cfg))
}

fn clip_unchecked(src: &SourceClip, index: u64, cfg: &ClipConfig) -> GeneratedClip {
    let mut rng = seed::stream(cfg.global_seed, index);
    let seg = cfg.segment_samples(src.sample_rate);
    let start = rng.random_range(0..=src.samples.len() - seg);
    let kind = cfg.ops[rng.random_range(0..cfg.ops.len())];
    let aug = AudioAug::sample(kind, &mut rng);
    let samples = aug.apply(&src.samples[start..start + seg], src.sample_rate);
    GeneratedClip { start, aug, samples }
}

/// Uniformly placed contiguous window of `len` samples.
pub fn training_view<'a, R: Rng>(clip: &'a [f32], len: usize, rng: &mut R) -> Result<&'a [f32]> {
    if clip.len() < len {
        return Err(Error::precondition(format!(
            "clip has {} samples, view needs {len}",
            clip.len()
        )));
    }
    let start = rng.random_range(0..=clip.len() - len);
    Ok(&clip[start..start + len])
}

/// Consecutive non-overlapping windows of `len` samples; the remainder is dropped.
pub fn segments(clip: &[f32], len: usize) -> Result<Vec<&[f32]>> {
    if len == 0 || clip.len() < len {
        return Err(Error::precondition(format!(
            "clip has {} samples, needs at least one {len}-sample segment",
            clip.len()
        )));
    }
    Ok(clip.chunks_exact(len).collect())
}

// ---- packed clip container -------------------------------------------------

pub const SAD_MAGIC: &[u8; 4] = b"SAD1";
pub const SAD_DTYPE_F32: u8 = 1;
pub const SAD_HEADER_LEN: usize = 4 + 3 * 4 + 1;
pub const CLIP_FILE: &str = "clips.sad";
pub const CLIP_FORMAT_VERSION: u32 = 1;

/// Dense stack of equal-length mono clips.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedClips {
    pub count: usize,
    pub samples_per_clip: usize,
    pub sample_rate: u32,
    pub data: Vec<f32>,
}

impl PackedClips {
    pub fn clip(&self, i: usize) -> &[f32] {
        &self.data[i * self.samples_per_clip..(i + 1) * self.samples_per_clip]
    }
}

pub fn write_sad(path: impl AsRef<Path>, clips: &PackedClips) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SAD_MAGIC)?;
    for d in [clips.count as u32, clips.samples_per_clip as u32, clips.sample_rate] {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[SAD_DTYPE_F32])?;
    for s in &clips.data {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sad(path: impl AsRef<Path>) -> Result<PackedClips> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; SAD_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::format("sad", format!("truncated header: {e}")))?;
    if &header[..4] != SAD_MAGIC {
        return Err(Error::format("sad", "bad magic"));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (count, spc, rate) = (field(0) as usize, field(1) as usize, field(2));
    if header[16] != SAD_DTYPE_F32 {
        return Err(Error::format("sad", format!("unsupported dtype code {}", header[16])));
    }
    let mut bytes = vec![0u8; count * spc * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::format("sad", format!("truncated payload: {e}")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(PackedClips {
        count,
        samples_per_clip: spc,
        sample_rate: rate,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub format_version: u32,
    pub kind: String,
    pub source: ClipInfo,
    pub config: ClipConfig,
    pub count: usize,
    pub data_file: String,
    pub data_sha256: String,
    /// Operation applied to each record, by index.
    pub ops: Vec<AudioOpKind>,
}

#[derive(Debug, Clone)]
pub struct ClipDataset {
    pub clips: PackedClips,
    pub manifest: ClipManifest,
}

impl ClipDataset {
    pub fn len(&self) -> usize {
        self.clips.count
    }

    pub fn is_empty(&self) -> bool {
        self.clips.count == 0
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(super::MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::Load {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let manifest: ClipManifest = serde_json::from_slice(&bytes)?;
        if manifest.format_version != CLIP_FORMAT_VERSION {
            return Err(Error::format("clip manifest", "unsupported format version"));
        }
        let clips = read_sad(dir.join(&manifest.data_file))?;
        if clips.count != manifest.count {
            return Err(Error::format("clip dataset", "record count disagrees with manifest"));
        }
        Ok(Self { clips, manifest })
    }
}

/// Generate `cfg.count` clips and persist them under `out_dir`.
pub fn generate_clip_dataset(
    src: &SourceClip,
    cfg: &ClipConfig,
    out_dir: impl AsRef<Path>,
    workers: Option<usize>,
) -> Result<ClipDataset> {
    cfg.validate()?;
    cfg.check_source(src)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let tmp = out_dir.join(format!("{CLIP_FILE}.partial"));
    let res = (|| -> Result<ClipDataset> {
        let generate = || -> Vec<GeneratedClip> {
            (0..cfg.count)
                .into_par_iter()
                .map(|i| clip_unchecked(src, i as u64, cfg))
                .collect()
        };
        let generated = match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?
                .install(generate),
            None => generate(),
        };
        let spc = cfg.segment_samples(src.sample_rate);
        let mut data = Vec::with_capacity(cfg.count * spc);
        let mut ops = Vec::with_capacity(cfg.count);
        for g in &generated {
            data.extend_from_slice(&g.samples);
            ops.push(g.aug.kind());
        }
        let clips = PackedClips {
            count: cfg.count,
            samples_per_clip: spc,
            sample_rate: src.sample_rate,
            data,
        };
        write_sad(&tmp, &clips)?;
        let manifest = ClipManifest {
            format_version: CLIP_FORMAT_VERSION,
            kind: "clips".into(),
            source: src.info(),
            config: cfg.clone(),
            count: cfg.count,
            data_file: CLIP_FILE.into(),
            data_sha256: crate::util::sha256_file(&tmp)?,
            ops,
        };
        crate::util::write_json(out_dir.join(super::MANIFEST_FILE), &manifest)?;
        fs::rename(&tmp, out_dir.join(CLIP_FILE))?;
        Ok(ClipDataset { clips, manifest })
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
        let _ = fs::remove_file(out_dir.join(super::MANIFEST_FILE));
    }
    res
}
