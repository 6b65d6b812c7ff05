//! Log-Mel spectrograms.
//!
//! Frames are taken without padding: a waveform of `L` samples yields
//! `floor((L - W) / H) + 1` frames for window `W` and hop `H`. Each frame is
//! Hann-windowed, zero-padded to the next power of two, and its power spectrum
//! is projected onto HTK-scale triangular filters before `ln(x + eps)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::dsp::hann;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mel_bins: usize,
    pub fmin_hz: f64,
    /// Upper filter edge; `None` means Nyquist.
    pub fmax_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_ms: 25.0,
            hop_ms: 10.0,
            mel_bins: 64,
            fmin_hz: 60.0,
            fmax_hz: None,
            log_floor: 1e-6,
        }
    }
}

impl SpectrogramConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn n_fft(&self) -> usize {
        self.window_samples().next_power_of_two()
    }

    pub fn fmax(&self) -> f64 {
        self.fmax_hz.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn frames_for(&self, len: usize) -> usize {
        let w = self.window_samples();
        if len < w {
            0
        } else {
            (len - w) / self.hop_samples() + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.window_samples(), self.hop_samples());
        if !(w > h && h > 0) {
            return Err(Error::config(format!("need window > hop > 0, got window {w}, hop {h}")));
        }
        if self.mel_bins == 0 {
            return Err(Error::config("mel_bins must be positive"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::config("log floor must be positive"));
        }
        if !(0.0 <= self.fmin_hz && self.fmin_hz < self.fmax() && self.fmax() <= self.sample_rate as f64 / 2.0) {
            return Err(Error::config("mel range must satisfy 0 <= fmin < fmax <= Nyquist"));
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies of the filters, in Hz.
pub fn mel_centers(cfg: &SpectrogramConfig) -> Vec<f64> {
    mel_edges(cfg)[1..=cfg.mel_bins].to_vec()
}

fn mel_edges(cfg: &SpectrogramConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax()));
    (0..cfg.mel_bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bins + 1) as f64))
        .collect()
}

/// `mel_bins x (n_fft / 2 + 1)` triangular weights with unit peak.
pub fn mel_filterbank(cfg: &SpectrogramConfig) -> Vec<Vec<f32>> {
    let n_fft = cfg.n_fft();
    let bins = n_fft / 2 + 1;
    let edges = mel_edges(cfg);
    let bin_hz = cfg.sample_rate as f64 / n_fft as f64;
    (0..cfg.mel_bins)
        .map(|m| {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    };
                    w as f32
                })
                .collect()
        })
        .collect()
}

/// Row-major `frames x bins` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f32>,
}

impl Spectrogram {
    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Reusable log-Mel front end (FFT plan, window and filterbank are cached).
pub struct LogMel {
    cfg: SpectrogramConfig,
    window: Vec<f32>,
    filters: Vec<Vec<f32>>,
    /// First/last nonzero bin of each filter.
    spans: Vec<(usize, usize)>,
    fft: Arc<dyn Fft<f32>>,
}

impl LogMel {
    pub fn new(cfg: SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let filters = mel_filterbank(&cfg);
        let spans = filters
            .iter()
            .map(|row| {
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).map_or(0, |i| i + 1);
                (first, last.max(first))
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft());
        Ok(Self {
            window: hann(cfg.window_samples()),
            filters,
            spans,
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    pub fn compute(&self, waveform: &[f32]) -> Result<Spectrogram> {
        let w = self.cfg.window_samples();
        if waveform.len() < w {
            return Err(Error::precondition(format!(
                "waveform has {} samples, shorter than one {w}-sample window",
                waveform.len()
            )));
        }
        let hop = self.cfg.hop_samples();
        let frames = self.cfg.frames_for(waveform.len());
        let n_fft = self.cfg.n_fft();
        let bins = n_fft / 2 + 1;
        let eps = self.cfg.log_floor;
        let mut buf = vec![Complex::new(0f32, 0.0); n_fft];
        let mut power = vec![0f64; bins];
        let mut data = Vec::with_capacity(frames * self.cfg.mel_bins);
        for t in 0..frames {
            let frame = &waveform[t * hop..t * hop + w];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < w {
                    Complex::new(frame[k] * self.window[k], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf[..bins]) {
                *p = c.norm_sqr() as f64;
            }
            for (row, &(a, b)) in self.filters.iter().zip(&self.spans) {
                let e: f64 = (a..b).map(|k| row[k] as f64 * power[k]).sum();
                data.push((e + eps).ln() as f32);
            }
        }
        Ok(Spectrogram {
            frames,
            bins: self.cfg.mel_bins,
            data,
        })
    }
}

/// One-shot log-Mel of a waveform.
pub fn compute_logmel(waveform: &[f32], cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    LogMel::new(cfg.clone())?.compute(waveform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_at_16k_gives_98_frames() {
        let cfg = SpectrogramConfig::default();
        assert_eq!((cfg.window_samples(), cfg.hop_samples(), cfg.n_fft()), (400, 160, 512));
        let s = compute_logmel(&vec![0.1; 16_000], &cfg).unwrap();
        assert_eq!((s.frames, s.bins), ((16_000 - 400) / 160 + 1, 64));
        assert_eq!(s.frames, 98);
    }

    #[test]
    fn silence_is_log_floor() {
        let cfg = SpectrogramConfig::default();
        let s = compute_logmel(&vec![0.0; 16_000], &cfg).unwrap();
        let floor = (1e-6f64).ln() as f32;
        assert!(s.data.iter().all(|&v| v == floor));
    }

    #[test]
    fn too_short_is_error() {
        let cfg = SpectrogramConfig::default();
        assert!(matches!(compute_logmel(&[0.0; 399], &cfg), Err(Error::Precondition(_))));
        assert_eq!(compute_logmel(&[0.0; 400], &cfg).unwrap().frames, 1);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SpectrogramConfig { hop_ms: 30.0, ..Default::default() },
            SpectrogramConfig { hop_ms: 0.0, ..Default::default() },
            SpectrogramConfig { mel_bins: 0, ..Default::default() },
            SpectrogramConfig { fmax_hz: Some(9000.0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn filterbank_covers_spectrum() {
        let cfg = SpectrogramConfig::default();
        let fb = mel_filterbank(&cfg);
        assert_eq!(fb.len(), 64);
        for row in &fb {
            assert_eq!(row.len(), 257);
            assert!(row.iter().sum::<f32>() > 0.0);
        }
        // Flat power spectrum -> every band strictly positive.
        let flat: Vec<f32> = fb.iter().map(|row| row.iter().sum()).collect();
        assert!(flat.iter().all(|&e| e > 0.0));
        let centers = mel_centers(&cfg);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert!(centers[0] > 60.0 && *centers.last().unwrap() < 8000.0);
    }

    #[test]
    fn mel_scale_roundtrip() {
        for f in [0.0, 60.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-6);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
    }

    #[test]
    fn tone_at_filter_center_selects_that_filter() {
        let cfg = SpectrogramConfig::default();
        let centers = mel_centers(&cfg);
        for idx in [10usize, 30, 50] {
            let f = centers[idx];
            let x: Vec<f32> = (0..16_000)
                .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin()) as f32)
                .collect();
            let s = compute_logmel(&x, &cfg).unwrap();
            for t in 0..s.frames {
                let row = s.row(t);
                let arg = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
                assert_eq!(arg, idx, "frame {t}");
            }
        }
    }

    #[test]
    fn time_reversal_reverses_frames_for_aligned_signals() {
        let cfg = SpectrogramConfig::default();
        // L = W + k*H makes the frame grid symmetric under reversal.
        let len = 400 + 160 * 40;
        let x: Vec<f32> = (0..len)
            .map(|i| ((i as f32 * 0.013).sin() * (i as f32 * 0.0007).cos()) * 0.5)
            .collect();
        let rev: Vec<f32> = x.iter().rev().copied().collect();
        let a = compute_logmel(&x, &cfg).unwrap();
        let b = compute_logmel(&rev, &cfg).unwrap();
        assert_eq!(a.frames, b.frames);
        // The Hann window is periodic, so frames match only approximately.
        for t in 0..a.frames {
            let (ra, rb) = (a.row(t), b.row(a.frames - 1 - t));
            for (u, v) in ra.iter().zip(rb) {
                assert!((u - v).abs() < 0.05 * u.abs().max(1.0), "frame {t}: {u} vs {v}");
            }
        }
    }
}
