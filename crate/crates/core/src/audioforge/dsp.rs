//! Signal-processing building blocks: resampling, STFT, biquads, convolution.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()) as f32)
        .collect()
}

/// Resample `x` to exactly `out_len` samples with a Hann-windowed sinc kernel.
/// When shrinking, the kernel cutoff drops to the new Nyquist rate.
pub fn resample_to_len(x: &[f32], out_len: usize) -> Vec<f32> {
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    if out_len == x.len() {
        return x.to_vec();
    }
    const HALF_TAPS: f64 = 16.0;
    let step = x.len() as f64 / out_len as f64;
    let cutoff = (1.0 / step).min(1.0);
    let radius = HALF_TAPS / cutoff;
    let n = x.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = (i as f64 + 0.5) * step - 0.5;
            let lo = (t - radius).ceil() as isize;
            let hi = (t + radius).floor() as isize;
            let mut acc = 0.0f64;
            let mut norm = 0.0f64;
            for k in lo..=hi {
                let d = k as f64 - t;
                let arg = d * cutoff;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let win = 0.5 + 0.5 * (PI * d / radius).cos();
                let w = sinc * win;
                norm += w;
                if (0..n).contains(&k) {
                    acc += w * x[k as usize] as f64;
                }
            }
            if norm.abs() > 1e-12 {
                (acc / norm) as f32
            } else {
                0.0
            }
        })
        .collect()
}

/// Resample between sample rates.
pub fn resample(x: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate {
        return x.to_vec();
    }
    let out_len = ((x.len() as u64 * to_rate as u64) as f64 / from_rate as f64).round() as usize;
    resample_to_len(x, out_len)
}

/// Truncate or zero-pad to `len`.
pub fn fit_length(mut x: Vec<f32>, len: usize) -> Vec<f32> {
    x.resize(len, 0.0);
    x
}

/// Short-time Fourier transform with a periodic Hann window. Frames start at
/// multiples of `hop`; the signal is zero-padded by `n_fft / 2` on both sides
/// so that [`istft`] can reconstruct every sample.
pub struct Stft {
    pub n_fft: usize,
    pub hop: usize,
    window: Vec<f32>,
    fwd: Arc<dyn Fft<f32>>,
    inv: Arc<dyn Fft<f32>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann(n_fft),
            fwd: planner.plan_fft_forward(n_fft),
            inv: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames x bins complex spectrogram (one-sided).
    pub fn forward(&self, x: &[f32]) -> Vec<Vec<Complex<f32>>> {
        let pad = self.n_fft / 2;
        let total = x.len() + 2 * pad;
        let frames = if total >= self.n_fft { (total - self.n_fft) / self.hop + 1 } else { 0 };
        let sample = |i: isize| -> f32 {
            let j = i - pad as isize;
            if j >= 0 && (j as usize) < x.len() {
                x[j as usize]
            } else {
                0.0
            }
        };
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        (0..frames)
            .map(|f| {
                let start = (f * self.hop) as isize;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(sample(start + k as isize) * self.window[k], 0.0);
                }
                self.fwd.process(&mut buf);
                buf[..self.bins()].to_vec()
            })
            .collect()
    }

    /// Weighted overlap-add inverse of [`Stft::forward`], producing `len` samples.
    pub fn inverse(&self, spec: &[Vec<Complex<f32>>], len: usize) -> Vec<f32> {
        let pad = self.n_fft / 2;
        let total = spec.len().saturating_sub(1) * self.hop + self.n_fft;
        let mut out = vec![0f32; total.max(len + 2 * pad)];
        let mut norm = vec![0f32; out.len()];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let scale = 1.0 / self.n_fft as f32;
        for (f, frame) in spec.iter().enumerate() {
            for k in 0..self.n_fft {
                buf[k] = if k < self.bins() {
                    frame[k]
                } else {
                    frame[self.n_fft - k].conj()
                };
            }
            self.inv.process(&mut buf);
            let start = f * self.hop;
            for k in 0..self.n_fft {
                let w = self.window[k];
                out[start + k] += buf[k].re * scale * w;
                norm[start + k] += w * w;
            }
        }
        (0..len)
            .map(|i| {
                let j = i + pad;
                if norm[j] > 1e-8 {
                    out[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Phase-vocoder time stretch. `rate > 1` shortens the signal; the result has
/// `round(len / rate)` samples and unchanged pitch.
pub fn time_stretch(x: &[f32], rate: f64) -> Vec<f32> {
    let out_len = (x.len() as f64 / rate).round() as usize;
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let stft = Stft::new(512, 128);
    let spec = stft.forward(x);
    let bins = stft.bins();
    let hop = stft.hop as f64;
    let expected: Vec<f64> = (0..bins).map(|k| 2.0 * PI * k as f64 * hop / stft.n_fft as f64).collect();
    let n_out = ((spec.len() as f64) / rate).ceil() as usize;
    let mut phase: Vec<f64> = spec[0].iter().map(|c| c.arg() as f64).collect();
    let mut out = Vec::with_capacity(n_out);
    for t in 0..n_out {
        let pos = t as f64 * rate;
        let i = pos.floor() as usize;
        if i + 1 >= spec.len() {
            break;
        }
        let frac = pos - i as f64;
        let (a, b) = (&spec[i], &spec[i + 1]);
        let frame: Vec<Complex<f32>> = (0..bins)
            .map(|k| {
                let mag = (1.0 - frac) * a[k].norm() as f64 + frac * b[k].norm() as f64;
                Complex::from_polar(mag as f32, phase[k] as f32)
            })
            .collect();
        for k in 0..bins {
            let mut dphi = (b[k].arg() - a[k].arg()) as f64 - expected[k];
            dphi -= 2.0 * PI * (dphi / (2.0 * PI)).round();
            phase[k] += expected[k] + dphi;
        }
        out.push(frame);
    }
    stft.inverse(&out, out_len)
}

/// Second-order IIR section in transposed direct form II.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b0 / a0, b1 / a0, b2 / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    fn omega(freq: f64, rate: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq / rate;
        (w.sin(), w.cos())
    }

    pub fn lowpass(freq: f64, rate: f64, q: f64) -> Self {
        let (sin, cos) = Self::omega(freq, rate);
        let alpha = sin / (2.0 * q);
        Self::normalized((1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0, 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn highpass(freq: f64, rate: f64, q: f64) -> Self {
        let (sin, cos) = Self::omega(freq, rate);
        let alpha = sin / (2.0 * q);
        Self::normalized((1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0, 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn peaking(freq: f64, rate: f64, q: f64, gain_db: f64) -> Self {
        let (sin, cos) = Self::omega(freq, rate);
        let a = 10f64.powf(gain_db / 40.0);
        let alpha = sin / (2.0 * q);
        Self::normalized(1.0 + alpha * a, -2.0 * cos, 1.0 - alpha * a, 1.0 + alpha / a, -2.0 * cos, 1.0 - alpha / a)
    }

    pub fn process(&self, x: &[f32]) -> Vec<f32> {
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        x.iter()
            .map(|&v| {
                let v = v as f64;
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[0] * y + z2;
                z2 = self.b[2] * v - self.a[1] * y;
                y as f32
            })
            .collect()
    }

    /// Magnitude response at `freq`.
    pub fn gain_at(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = Complex::new(self.b[0], 0.0) + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        (num / den).norm()
    }
}

/// Linear convolution truncated to `x.len()` samples, via FFT.
pub fn convolve_truncated(x: &[f32], h: &[f32]) -> Vec<f32> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f32>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<f32>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(n, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f32>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..x.len()].iter().map(|c| c.re / n as f32).collect()
}

pub fn peak(x: &[f32]) -> f32 {
    x.iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64).sqrt()
}
