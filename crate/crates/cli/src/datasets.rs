//! Dataset wiring: labeled evaluation/teacher data under the data root and
//! generated patch/clip datasets.

use std::path::Path;

use onedatum::audioforge::{ClipDataset, PackedClips, SpectrogramConfig};
use onedatum::data::cifar::{load_cifar, CifarKind, Split};
use onedatum::data::speech::load_audio_folder;
use onedatum::data::{ClipSource, FlipCrop, ImageSource, InputSource, LabeledData, Normalization, PackedImages};
use onedatum::patchforge::PatchDataset;
use onedatum::{Error, Result};

/// Seconds of audio the audio models see per example.
pub const AUDIO_VIEW_SECONDS: f64 = 1.0;

/// Directory under the data root holding the speech-commands folders.
pub const SPEECH_DIR: &str = "speech_commands";

/// Labeled domain of a teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Cifar(CifarKind),
    Speech,
}

impl Domain {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "speech" | "speechcommands" | "speech-commands" | "speech_commands" => Ok(Self::Speech),
            other => CifarKind::parse(other)
                .map(Self::Cifar)
                .map_err(|_| Error::Config(format!("unknown dataset `{name}` (cifar10, cifar100, speech)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cifar(k) => k.name(),
            Self::Speech => "speech",
        }
    }

    pub fn normalization(self) -> Normalization {
        match self {
            Self::Cifar(CifarKind::Cifar10) => Normalization::cifar10(),
            Self::Cifar(CifarKind::Cifar100) => Normalization::cifar100(),
            Self::Speech => Normalization::identity(1),
        }
    }

    pub fn is_audio(self) -> bool {
        self == Self::Speech
    }
}

fn limit_images(images: PackedImages, limit: Option<usize>) -> PackedImages {
    match limit {
        Some(n) if n < images.count => images.prefix(n),
        _ => images,
    }
}

fn limit_clips(clips: PackedClips, limit: Option<usize>) -> PackedClips {
    match limit {
        Some(n) if n < clips.count => PackedClips {
            count: n,
            samples_per_clip: clips.samples_per_clip,
            sample_rate: clips.sample_rate,
            data: clips.data[..n * clips.samples_per_clip].to_vec(),
        },
        _ => clips,
    }
}

/// Load a labeled split. `limit` keeps the first `n` examples.
pub fn load_labeled(root: &Path, domain: Domain, split: Split, limit: Option<usize>, download: bool) -> Result<LabeledData> {
    match domain {
        Domain::Cifar(kind) => {
            let s = load_cifar(&root.join("cifar"), kind, split, download)?;
            let n = limit.unwrap_or(s.labels.len()).min(s.labels.len());
            let images = limit_images(s.images, limit);
            let src = ImageSource::new(images, domain.normalization(), FlipCrop::default())?;
            Ok(LabeledData::new(Box::new(src), s.labels[..n].to_vec(), kind.num_classes())?.with_class_names(kind.class_names()))
        }
        Domain::Speech => {
            let s = load_audio_folder(&root.join(SPEECH_DIR), split, AUDIO_VIEW_SECONDS)?;
            let n = limit.unwrap_or(s.labels.len()).min(s.labels.len());
            let classes = s.class_names.len();
            let src = ClipSource::new(limit_clips(s.clips, limit), SpectrogramConfig::default(), AUDIO_VIEW_SECONDS)?;
            Ok(LabeledData::new(Box::new(src), s.labels[..n].to_vec(), classes)?.with_class_names(s.class_names))
        }
    }
}

/// A generated single-datum dataset.
pub enum Generated {
    Patches(PatchDataset),
    Clips(ClipDataset),
}

impl Generated {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = dir.join(onedatum::patchforge::MANIFEST_FILE);
        if !manifest.exists() {
            return Err(Error::MissingPrerequisite(format!(
                "no generated dataset at {}; run `onedatum gen-patches` or `onedatum gen-audio` first",
                dir.display()
            )));
        }
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest)?)?;
        match v.get("kind").and_then(|k| k.as_str()) {
            Some("patches") => Ok(Self::Patches(PatchDataset::open(dir)?)),
            Some("clips") => Ok(Self::Clips(ClipDataset::open(dir)?)),
            other => Err(Error::format("dataset manifest", format!("unknown kind {other:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Patches(p) => p.len(),
            Self::Clips(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_hash(&self) -> String {
        match self {
            Self::Patches(p) => p.manifest.data_sha256.clone(),
            Self::Clips(c) => c.manifest.data_sha256.clone(),
        }
    }

    pub fn source_hash(&self) -> String {
        match self {
            Self::Patches(p) => p.manifest.source.content_hash.clone(),
            Self::Clips(c) => c.manifest.source.content_hash.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Patches(p) => p.manifest.config.global_seed,
            Self::Clips(c) => c.manifest.config.global_seed,
        }
    }

    /// Model inputs for `domain`, keeping the first `limit` records.
    pub fn source(&self, domain: Domain, limit: Option<usize>) -> Result<Box<dyn InputSource>> {
        match (self, domain.is_audio()) {
            (Self::Patches(p), false) => Ok(Box::new(ImageSource::new(
                limit_images(p.records.clone(), limit),
                domain.normalization(),
                FlipCrop::default(),
            )?)),
            (Self::Clips(c), true) => Ok(Box::new(ClipSource::new(
                limit_clips(c.clips.clone(), limit),
                SpectrogramConfig::default(),
                AUDIO_VIEW_SECONDS,
            )?)),
            (Self::Patches(_), true) => Err(Error::Config("image patches cannot drive an audio teacher".into())),
            (Self::Clips(_), false) => Err(Error::Config("audio clips cannot drive an image teacher".into())),
        }
    }

    /// Raw RGB records (image datasets only).
    pub fn images(&self) -> Result<&PackedImages> {
        match self {
            Self::Patches(p) => Ok(&p.records),
            Self::Clips(_) => Err(Error::Config("expected an image patch dataset".into())),
        }
    }
}

/// Content hash of the raw files behind a labeled domain.
pub fn domain_fingerprint(root: &Path, domain: Domain) -> Result<String> {
    use std::fmt::Write;
    let dir = match domain {
        Domain::Cifar(_) => root.join("cifar"),
        Domain::Speech => root.join(SPEECH_DIR),
    };
    let mut files = Vec::new();
    let mut stack = vec![dir.clone()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("bin" | "wav" | "txt")) {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut listing = String::new();
    for f in &files {
        let rel = f.strip_prefix(&dir).unwrap_or(f);
        let _ = writeln!(listing, "{}\t{}", rel.display(), onedatum::util::sha256_file(f)?);
    }
    Ok(onedatum::util::sha256_bytes(listing.as_bytes()))
}
