//! Clip dataset generation from a single recording, and the log-Mel front end.

pub mod augment;
mod clip;
pub mod dsp;
pub mod spectrogram;

pub use augment::{AudioAug, AudioOpKind};
pub use clip::{
    generate_clip, generate_clip_dataset, read_sad, read_wav_mono, segments, training_view, write_sad,
    write_wav, ClipConfig, ClipDataset, ClipInfo, ClipManifest, GeneratedClip, PackedClips, SourceClip,
    CLIP_FILE, TARGET_RATE,
};
pub use spectrogram::{compute_logmel, mel_centers, mel_filterbank, LogMel, Spectrogram, SpectrogramConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
