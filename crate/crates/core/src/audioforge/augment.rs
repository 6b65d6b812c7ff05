//! The fourteen waveform augmentations used to build clip datasets.
//!
//! Parameter ranges are self-contained choices (see each variant). Every op
//! returns a mono signal of the input length with finite samples in [-1, 1].

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::dsp::{self, Biquad, Stft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudioOpKind {
    AddBackgroundNoise,
    ChangeVolume,
    Clicks,
    Clip,
    Harmonic,
    HighPassFilter,
    LowPassFilter,
    Normalize,
    PeakingEqualizer,
    Percussive,
    PitchShift,
    Reverb,
    Speed,
    TimeStretch,
}

impl AudioOpKind {
    pub const ALL: [AudioOpKind; 14] = [
        AudioOpKind::AddBackgroundNoise,
        AudioOpKind::ChangeVolume,
        AudioOpKind::Clicks,
        AudioOpKind::Clip,
        AudioOpKind::Harmonic,
        AudioOpKind::HighPassFilter,
        AudioOpKind::LowPassFilter,
        AudioOpKind::Normalize,
        AudioOpKind::PeakingEqualizer,
        AudioOpKind::Percussive,
        AudioOpKind::PitchShift,
        AudioOpKind::Reverb,
        AudioOpKind::Speed,
        AudioOpKind::TimeStretch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AudioOpKind::AddBackgroundNoise => "add-background-noise",
            AudioOpKind::ChangeVolume => "change-volume",
            AudioOpKind::Clicks => "clicks",
            AudioOpKind::Clip => "clip",
            AudioOpKind::Harmonic => "harmonic",
            AudioOpKind::HighPassFilter => "high-pass-filter",
            AudioOpKind::LowPassFilter => "low-pass-filter",
            AudioOpKind::Normalize => "normalize",
            AudioOpKind::PeakingEqualizer => "peaking-equalizer",
            AudioOpKind::Percussive => "percussive",
            AudioOpKind::PitchShift => "pitch-shift",
            AudioOpKind::Reverb => "reverb",
            AudioOpKind::Speed => "speed",
            AudioOpKind::TimeStretch => "time-stretch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A fully parameterized augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum AudioAug {
    /// White Gaussian noise at the given signal-to-noise ratio.
    AddBackgroundNoise { snr_db: f64, noise_seed: u64 },
    /// Scalar gain.
    ChangeVolume { gain: f64 },
    /// Short decaying 1 kHz bursts at `rate_hz` random positions per second.
    Clicks { rate_hz: f64, noise_seed: u64 },
    /// Hard clipping at `threshold` times the segment peak.
    Clip { threshold: f64 },
    /// Keep the harmonic component of a median-filter separation.
    Harmonic,
    HighPassFilter { cutoff_hz: f64 },
    LowPassFilter { cutoff_hz: f64 },
    /// Scale so the peak magnitude is 1.
    Normalize,
    PeakingEqualizer { center_hz: f64, gain_db: f64, q: f64 },
    /// Keep the percussive component of a median-filter separation.
    Percussive,
    PitchShift { semitones: f64 },
    /// Convolution with an exponentially decaying noise impulse response.
    Reverb { rt60_s: f64, wet: f64, noise_seed: u64 },
    /// Resampling speed change, then crop/pad back to length.
    Speed { factor: f64 },
    /// Phase-vocoder tempo change, then crop/pad back to length.
    TimeStretch { factor: f64 },
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl AudioAug {
    pub fn kind(&self) -> AudioOpKind {
        match self {
            AudioAug::AddBackgroundNoise { .. } => AudioOpKind::AddBackgroundNoise,
            AudioAug::ChangeVolume { .. } => AudioOpKind::ChangeVolume,
            AudioAug::Clicks { .. } => AudioOpKind::Clicks,
            AudioAug::Clip { .. } => AudioOpKind::Clip,
            AudioAug::Harmonic => AudioOpKind::Harmonic,
            AudioAug::HighPassFilter { .. } => AudioOpKind::HighPassFilter,
            AudioAug::LowPassFilter { .. } => AudioOpKind::LowPassFilter,
            AudioAug::Normalize => AudioOpKind::Normalize,
            AudioAug::PeakingEqualizer { .. } => AudioOpKind::PeakingEqualizer,
            AudioAug::Percussive => AudioOpKind::Percussive,
            AudioAug::PitchShift { .. } => AudioOpKind::PitchShift,
            AudioAug::Reverb { .. } => AudioOpKind::Reverb,
            AudioAug::Speed { .. } => AudioOpKind::Speed,
            AudioAug::TimeStretch { .. } => AudioOpKind::TimeStretch,
        }
    }

    /// Draw parameters for `kind` from its default range.
    pub fn sample<R: Rng>(kind: AudioOpKind, rng: &mut R) -> Self {
        match kind {
            AudioOpKind::AddBackgroundNoise => AudioAug::AddBackgroundNoise {
                snr_db: uniform(rng, 5.0, 30.0),
                noise_seed: rng.random(),
            },
            AudioOpKind::ChangeVolume => AudioAug::ChangeVolume { gain: uniform(rng, 0.25, 4.0) },
            AudioOpKind::Clicks => AudioAug::Clicks {
                rate_hz: uniform(rng, 1.0, 5.0),
                noise_seed: rng.random(),
            },
            AudioOpKind::Clip => AudioAug::Clip { threshold: uniform(rng, 0.3, 0.9) },
            AudioOpKind::Harmonic => AudioAug::Harmonic,
            AudioOpKind::HighPassFilter => AudioAug::HighPassFilter { cutoff_hz: log_uniform(rng, 100.0, 4000.0) },
            AudioOpKind::LowPassFilter => AudioAug::LowPassFilter { cutoff_hz: log_uniform(rng, 1000.0, 8000.0) },
            AudioOpKind::Normalize => AudioAug::Normalize,
            AudioOpKind::PeakingEqualizer => AudioAug::PeakingEqualizer {
                center_hz: log_uniform(rng, 100.0, 6000.0),
                gain_db: uniform(rng, -12.0, 12.0),
                q: 1.0,
            },
            AudioOpKind::Percussive => AudioAug::Percussive,
            AudioOpKind::PitchShift => AudioAug::PitchShift { semitones: uniform(rng, -4.0, 4.0) },
            AudioOpKind::Reverb => AudioAug::Reverb {
                rt60_s: uniform(rng, 0.1, 0.6),
                wet: 0.5,
                noise_seed: rng.random(),
            },
            AudioOpKind::Speed => AudioAug::Speed { factor: uniform(rng, 0.8, 1.2) },
            AudioOpKind::TimeStretch => AudioAug::TimeStretch { factor: uniform(rng, 0.8, 1.2) },
        }
    }

    /// Apply to a mono segment sampled at `rate` Hz.
    pub fn apply(&self, x: &[f32], rate: u32) -> Vec<f32> {
        let fs = rate as f64;
        // Filters are only stable below Nyquist.
        let max_freq = 0.45 * fs;
        let len = x.len();
        let y = match *self {
            AudioAug::AddBackgroundNoise { snr_db, noise_seed } => {
                let noise_rms = dsp::rms(x) / 10f64.powf(snr_db / 20.0);
                let mut rng = crate::seed::stream(noise_seed, 0);
                x.iter()
                    .map(|&v| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        (v as f64 + n * noise_rms) as f32
                    })
                    .collect()
            }
            AudioAug::ChangeVolume { gain } => x.iter().map(|&v| (v as f64 * gain) as f32).collect(),
            AudioAug::Clicks { rate_hz, noise_seed } => add_clicks(x, fs, rate_hz, noise_seed),
            AudioAug::Clip { threshold } => {
                let t = threshold as f32 * dsp::peak(x);
                x.iter().map(|&v| v.clamp(-t, t)).collect()
            }
            AudioAug::Harmonic => hpss(x, true),
            AudioAug::Percussive => hpss(x, false),
            AudioAug::HighPassFilter { cutoff_hz } => {
                Biquad::highpass(cutoff_hz.min(max_freq), fs, FRAC_1_SQRT_2).process(x)
            }
            AudioAug::LowPassFilter { cutoff_hz } => {
                Biquad::lowpass(cutoff_hz.min(max_freq), fs, FRAC_1_SQRT_2).process(x)
            }
            AudioAug::Normalize => {
                let p = dsp::peak(x);
                if p > 0.0 {
                    x.iter().map(|&v| v / p).collect()
                } else {
                    x.to_vec()
                }
            }
            AudioAug::PeakingEqualizer { center_hz, gain_db, q } => {
                Biquad::peaking(center_hz.min(max_freq), fs, q, gain_db).process(x)
            }
            AudioAug::PitchShift { semitones } => {
                let ratio = 2f64.powf(semitones / 12.0);
                // Raising pitch by `ratio` = playing faster, then restoring the duration.
                let faster = dsp::resample_to_len(x, ((len as f64) / ratio).round().max(1.0) as usize);
                let restored = dsp::time_stretch(&faster, faster.len() as f64 / len as f64);
                dsp::fit_length(restored, len)
            }
            AudioAug::Reverb { rt60_s, wet, noise_seed } => reverb(x, fs, rt60_s, wet, noise_seed),
            AudioAug::Speed { factor } => {
                let y = dsp::resample_to_len(x, ((len as f64) / factor).round().max(1.0) as usize);
                dsp::fit_length(y, len)
            }
            AudioAug::TimeStretch { factor } => dsp::fit_length(dsp::time_stretch(x, factor), len),
        };
        finalize(y, len)
    }
}

/// Enforce the output contract: length, finiteness, [-1, 1].
fn finalize(mut y: Vec<f32>, len: usize) -> Vec<f32> {
    y.resize(len, 0.0);
    for v in &mut y {
        *v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    }
    y
}

fn add_clicks(x: &[f32], fs: f64, rate_hz: f64, seed: u64) -> Vec<f32> {
    let mut y = x.to_vec();
    let mut rng = crate::seed::stream(seed, 1);
    let count = ((x.len() as f64 / fs) * rate_hz).round().max(1.0) as usize;
    let click_len = (0.1 * fs) as usize;
    let amp = 0.5f64;
    for _ in 0..count {
        let at = rng.random_range(0..x.len());
        for k in 0..click_len.min(x.len() - at) {
            let t = k as f64 / fs;
            let burst = amp * (2.0 * std::f64::consts::PI * 1000.0 * t).sin() * (-t / 0.01).exp();
            y[at + k] += burst as f32;
        }
    }
    y
}

fn reverb(x: &[f32], fs: f64, rt60: f64, wet: f64, seed: u64) -> Vec<f32> {
    let ir_len = ((rt60 * fs) as usize).max(1);
    let mut rng = crate::seed::stream(seed, 2);
    // 60 dB amplitude decay over rt60 seconds.
    let decay = 6.907_755_278_982_137 / (rt60 * fs);
    let mut ir: Vec<f32> = (0..ir_len)
        .map(|n| {
            let g: f64 = StandardNormal.sample(&mut rng);
            (g * (-decay * n as f64).exp()) as f32
        })
        .collect();
    ir[0] = 0.0;
    let energy = ir.iter().map(|v| v * v).sum::<f32>().sqrt();
    if energy > 0.0 {
        ir.iter_mut().for_each(|v| *v /= energy);
    }
    let tail = dsp::convolve_truncated(x, &ir);
    let mixed: Vec<f32> = x
        .iter()
        .zip(&tail)
        .map(|(&d, &w)| ((1.0 - wet) * d as f64 + wet * w as f64) as f32)
        .collect();
    // Keep the input's peak level.
    let (p_in, p_out) = (dsp::peak(x), dsp::peak(&mixed));
    if p_out > 0.0 {
        mixed.iter().map(|v| v * p_in / p_out).collect()
    } else {
        mixed
    }
}

fn median(v: &mut [f32]) -> f32 {
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap()).1
}

/// Median-filter harmonic/percussive separation with soft masks.
fn hpss(x: &[f32], harmonic: bool) -> Vec<f32> {
    const KERNEL: usize = 17;
    let stft = Stft::new(512, 128);
    let spec = stft.forward(x);
    let frames = spec.len();
    let bins = stft.bins();
    let mag: Vec<Vec<f32>> = spec.iter().map(|f| f.iter().map(|c| c.norm()).collect()).collect();
    let half = KERNEL / 2;
    let mut window = Vec::with_capacity(KERNEL);
    let mut out = spec.clone();
    for t in 0..frames {
        for k in 0..bins {
            window.clear();
            for dt in t.saturating_sub(half)..(t + half + 1).min(frames) {
                window.push(mag[dt][k]);
            }
            let h = median(&mut window);
            window.clear();
            for dk in k.saturating_sub(half)..(k + half + 1).min(bins) {
                window.push(mag[t][dk]);
            }
            let p = median(&mut window);
            let (h2, p2) = (h * h, p * p);
            let denom = h2 + p2;
            let mask = if denom > 1e-12 {
                if harmonic {
                    h2 / denom
                } else {
                    p2 / denom
                }
            } else {
                0.5
            };
            out[t][k] = spec[t][k] * Complex::new(mask, 0.0);
        }
    }
    stft.inverse(&out, x.len())
}
