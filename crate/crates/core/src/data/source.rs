//! Batch assembly: turn stored records into float input tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::packed::PackedImages;
use crate::audioforge::{LogMel, PackedClips, SpectrogramConfig};
use crate::error::{Error, Result};

/// Anything that can produce model-ready input batches by index.
pub trait InputSource: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[channels, height, width]` of one input.
    fn input_shape(&self) -> [usize; 3];

    /// Float batch for `indices`. When `rng` is given, train-time
    /// augmentation is applied; otherwise the result is deterministic.
    fn batch(&self, indices: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor>;
}

/// Per-channel mean/std normalization of 0..1 pixel values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn cifar10() -> Self {
        Self { mean: vec![0.4914, 0.4822, 0.4465], std: vec![0.2470, 0.2435, 0.2616] }
    }

    pub fn cifar100() -> Self {
        Self { mean: vec![0.5071, 0.4865, 0.4409], std: vec![0.2673, 0.2564, 0.2762] }
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "cifar10" => Ok(Self::cifar10()),
            "cifar100" => Ok(Self::cifar100()),
            "none" => Ok(Self::identity(3)),
            _ => Err(Error::config(format!("unknown normalization preset `{name}`"))),
        }
    }
}

/// Flip/crop augmentation for images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipCrop {
    /// Zero padding before the random crop; 0 disables cropping.
    pub pad: usize,
    pub hflip: bool,
}

impl Default for FlipCrop {
    fn default() -> Self {
        Self { pad: 4, hflip: true }
    }
}

impl FlipCrop {
    pub fn none() -> Self {
        Self { pad: 0, hflip: false }
    }
}

/// u8 NHWC images served as normalized NCHW float batches.
#[derive(Debug, Clone)]
pub struct ImageSource {
    pub images: PackedImages,
    pub norm: Normalization,
    pub aug: FlipCrop,
}

impl ImageSource {
    pub fn new(images: PackedImages, norm: Normalization, aug: FlipCrop) -> Result<Self> {
        if norm.mean.len() != images.channels || norm.std.len() != images.channels {
            return Err(Error::config(format!(
                "normalization has {} channels, images have {}",
                norm.mean.len(),
                images.channels
            )));
        }
        if norm.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::config("normalization std must be positive"));
        }
        Ok(Self { images, norm, aug })
    }

    /// Write one record into `out` (CHW) with integer shift `(dy, dx)` into
    /// the zero-padded frame and an optional horizontal flip.
    fn write_record(&self, i: usize, dy: isize, dx: isize, flip: bool, out: &mut [f32]) {
        let (h, w, c) = (self.images.height, self.images.width, self.images.channels);
        let rec = self.images.record(i);
        let pad = self.aug.pad as isize;
        for ch in 0..c {
            let zero = -self.norm.mean[ch] / self.norm.std[ch];
            for y in 0..h {
                let sy = y as isize + dy - pad;
                for x in 0..w {
                    let xx = if flip { w - 1 - x } else { x };
                    let sx = xx as isize + dx - pad;
                    let v = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        zero
                    } else {
                        let p = rec[(sy as usize * w + sx as usize) * c + ch] as f32 / 255.0;
                        (p - self.norm.mean[ch]) / self.norm.std[ch]
                    };
                    out[(ch * h + y) * w + x] = v;
                }
            }
        }
    }
}

impl InputSource for ImageSource {
    fn len(&self) -> usize {
        self.images.count
    }

    fn input_shape(&self) -> [usize; 3] {
        [self.images.channels, self.images.height, self.images.width]
    }

    fn batch(&self, indices: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let [c, h, w] = self.input_shape();
        let n = c * h * w;
        let mut buf = vec![0f32; indices.len() * n];
        let pad = self.aug.pad as isize;
        for (k, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::precondition(format!("index {i} out of range for {} images", self.len())));
            }
            let (dy, dx, flip) = match rng.as_deref_mut() {
                Some(r) => (
                    r.random_range(0..=2 * pad as i64) as isize,
                    r.random_range(0..=2 * pad as i64) as isize,
                    self.aug.hflip && r.random_bool(0.5),
                ),
                None => (pad, pad, false),
            };
            self.write_record(i, dy, dx, flip, &mut buf[k * n..(k + 1) * n]);
        }
        Ok(Tensor::from_slice(&buf).view([indices.len() as i64, c as i64, h as i64, w as i64]))
    }
}

/// Waveforms served as `(N, 1, frames, mel)` log-Mel batches.
pub struct ClipSource {
    pub clips: PackedClips,
    logmel: LogMel,
    view_samples: usize,
}

impl std::fmt::Debug for ClipSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClipSource")
            .field("count", &self.clips.count)
            .field("view_samples", &self.view_samples)
            .finish()
    }
}

impl ClipSource {
    /// `view_seconds` of audio per example; longer clips are randomly
    /// cropped in training and center-cropped otherwise.
    pub fn new(clips: PackedClips, cfg: SpectrogramConfig, view_seconds: f64) -> Result<Self> {
        if clips.sample_rate != cfg.sample_rate {
            return Err(Error::config(format!(
                "clips are {} Hz, spectrogram expects {} Hz",
                clips.sample_rate, cfg.sample_rate
            )));
        }
        let view_samples = (view_seconds * cfg.sample_rate as f64).round() as usize;
        if view_samples > clips.samples_per_clip {
            return Err(Error::config(format!(
                "view of {view_samples} samples exceeds clip length {}",
                clips.samples_per_clip
            )));
        }
        Ok(Self { clips, logmel: LogMel::new(cfg)?, view_samples })
    }

    fn frames(&self) -> usize {
        self.logmel.config().frames_for(self.view_samples)
    }
}

impl InputSource for ClipSource {
    fn len(&self) -> usize {
        self.clips.count
    }

    fn input_shape(&self) -> [usize; 3] {
        [1, self.frames(), self.logmel.config().mel_bins]
    }

    fn batch(&self, indices: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let [_, t, m] = self.input_shape();
        let mut buf = Vec::with_capacity(indices.len() * t * m);
        let slack = self.clips.samples_per_clip - self.view_samples;
        for &i in indices {
            if i >= self.len() {
                return Err(Error::precondition(format!("index {i} out of range for {} clips", self.len())));
            }
            let start = match rng.as_deref_mut() {
                Some(r) => r.random_range(0..=slack),
                None => slack / 2,
            };
            let view = &self.clips.clip(i)[start..start + self.view_samples];
            buf.extend_from_slice(&self.logmel.compute(view)?.data);
        }
        Ok(Tensor::from_slice(&buf).view([indices.len() as i64, 1, t as i64, m as i64]))
    }
}

/// Inputs paired with integer class labels.
pub struct LabeledData {
    pub source: Box<dyn InputSource>,
    pub labels: Vec<i64>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl std::fmt::Debug for LabeledData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledData")
            .field("len", &self.labels.len())
            .field("num_classes", &self.num_classes)
            .finish()
    }
}

impl LabeledData {
    pub fn new(source: Box<dyn InputSource>, labels: Vec<i64>, num_classes: usize) -> Result<Self> {
        if source.len() != labels.len() {
            return Err(Error::format(
                "labeled data",
                format!("{} inputs but {} labels", source.len(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < 0 || l as usize >= num_classes) {
            return Err(Error::format("labeled data", format!("label {bad} outside 0..{num_classes}")));
        }
        let class_names = (0..num_classes).map(|c| c.to_string()).collect();
        Ok(Self { source, labels, num_classes, class_names })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.num_classes {
            self.class_names = names;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels_for(&self, indices: &[usize]) -> Tensor {
        let v: Vec<i64> = indices.iter().map(|&i| self.labels[i]).collect();
        Tensor::from_slice(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp() -> PackedImages {
        let mut p = PackedImages::new(4, 4, 3);
        let rec: Vec<u8> = (0..48).map(|i| (i * 5) as u8).collect();
        p.push(&rec);
        p
    }

    #[test]
    fn eval_batch_is_plain_normalization() {
        let src = ImageSource::new(ramp(), Normalization::identity(3), FlipCrop::default()).unwrap();
        let t = src.batch(&[0], None).unwrap();
        assert_eq!(t.size(), vec![1, 3, 4, 4]);
        // channel 1, pixel (2, 3) -> record offset (2*4+3)*3+1 = 34
        let v = t.double_value(&[0, 1, 2, 3]);
        assert!((v - (34.0 * 5.0) / 255.0).abs() < 1e-6);
    }

    #[test]
    fn train_batch_is_shift_or_flip_of_padded_record() {
        let src = ImageSource::new(ramp(), Normalization::identity(3), FlipCrop { pad: 1, hflip: true }).unwrap();
        let base = src.batch(&[0], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let t = src.batch(&[0], Some(&mut rng)).unwrap();
            let mut found = false;
            for flip in [false, true] {
                let b = if flip { base.flip([3]) } else { base.shallow_clone() };
                let padded = b.constant_pad_nd([1, 1, 1, 1]);
                for dy in 0..3 {
                    for dx in 0..3 {
                        if padded.narrow(2, dy, 4).narrow(3, dx, 4).equal(&t) {
                            found = true;
                        }
                    }
                }
            }
            assert!(found);
        }
    }

    #[test]
    fn label_validation() {
        let src = ImageSource::new(ramp(), Normalization::identity(3), FlipCrop::none()).unwrap();
        assert!(LabeledData::new(Box::new(src.clone()), vec![3], 3).is_err());
        assert!(LabeledData::new(Box::new(src.clone()), vec![0, 1], 3).is_err());
        assert!(LabeledData::new(Box::new(src), vec![2], 3).is_ok());
    }

    #[test]
    fn clip_source_shape() {
        let clips = PackedClips { count: 2, samples_per_clip: 32_000, sample_rate: 16_000, data: vec![0.0; 64_000] };
        let src = ClipSource::new(clips, SpectrogramConfig::default(), 1.0).unwrap();
        assert_eq!(src.input_shape(), [1, 98, 64]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(src.batch(&[0, 1], Some(&mut rng)).unwrap().size(), vec![2, 1, 98, 64]);
    }
}
