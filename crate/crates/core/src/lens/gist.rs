//! GIST scene descriptor: a frequency-domain Gabor bank (scales x
//! orientations) whose response magnitudes are averaged over a square grid.
//!
//! Filters follow the classic construction
//! `G = exp(-10 a (f/(n b) - 1)^2 - 2 c π θ'^2)` on the centred frequency
//! plane, with `a = 0.35`, `b = 0.3 / 1.85^s`, `c = 16 o^2 / 32^2` and the
//! angle shifted by `π j / o`. No whitening prefilter is applied.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::hist::Histogram;
use crate::error::{Error, Result};
use crate::patchforge::{resize_region, Region, SourceImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistConfig {
    pub scales: usize,
    pub orientations: usize,
    pub grid: usize,
    pub size: usize,
}

impl Default for GistConfig {
    fn default() -> Self {
        Self { scales: 4, orientations: 8, grid: 4, size: 256 }
    }
}

impl GistConfig {
    pub fn descriptor_len(&self) -> usize {
        self.scales * self.orientations * self.grid * self.grid
    }
}

/// Precomputed filter bank and FFT plans for one configuration.
pub struct Gist {
    cfg: GistConfig,
    filters: Vec<Vec<f32>>,
    fwd: Arc<dyn Fft<f32>>,
    inv: Arc<dyn Fft<f32>>,
}

impl std::fmt::Debug for Gist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gist").field("cfg", &self.cfg).finish()
    }
}

/// Gabor transfer functions laid out in unshifted FFT order.
pub fn gabor_bank(cfg: &GistConfig) -> Vec<Vec<f32>> {
    let n = cfg.size;
    let o = cfg.orientations as f64;
    let mut out = Vec::new();
    for s in 0..cfg.scales {
        for j in 0..cfg.orientations {
            let a = 0.35;
            let b = 0.3 / 1.85f64.powi(s as i32);
            let c = 16.0 * o * o / (32.0 * 32.0);
            let shift = std::f64::consts::PI / o * j as f64;
            let mut g = vec![0f32; n * n];
            for y in 0..n {
                // Unshifted index -> signed frequency.
                let fy = if y < n / 2 { y as f64 } else { y as f64 - n as f64 };
                for x in 0..n {
                    let fx = if x < n / 2 { x as f64 } else { x as f64 - n as f64 };
                    let fr = (fx * fx + fy * fy).sqrt();
                    let t = fy.atan2(fx);
                    let mut tr = t + shift;
                    tr = (tr + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
                    let v = (-10.0 * a * (fr / n as f64 / b - 1.0).powi(2) - 2.0 * c * std::f64::consts::PI * tr * tr).exp();
                    g[y * n + x] = v as f32;
                }
            }
            out.push(g);
        }
    }
    out
}

impl Gist {
    pub fn new(cfg: GistConfig) -> Result<Self> {
        if cfg.scales == 0 || cfg.orientations == 0 || cfg.grid == 0 || cfg.size < cfg.grid {
            return Err(Error::config("GIST needs positive scales/orientations/grid and size >= grid"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            filters: gabor_bank(&cfg),
            fwd: planner.plan_fft_forward(cfg.size),
            inv: planner.plan_fft_inverse(cfg.size),
            cfg,
        })
    }

    pub fn config(&self) -> &GistConfig {
        &self.cfg
    }

    fn fft2(&self, data: &mut [Complex<f32>], inverse: bool) {
        let n = self.cfg.size;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = data[y * n + x];
            }
            plan.process(&mut col);
            for y in 0..n {
                data[y * n + x] = col[y];
            }
        }
    }

    /// Descriptor of a `size x size` grayscale image in 0..255.
    pub fn describe_gray(&self, gray: &[f32]) -> Result<Vec<f32>> {
        let n = self.cfg.size;
        if gray.len() != n * n {
            return Err(Error::precondition(format!("expected {n}x{n} grayscale, got {} values", gray.len())));
        }
        let mut spec: Vec<Complex<f32>> = gray.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2(&mut spec, false);
        let g = self.cfg.grid;
        let mut out = Vec::with_capacity(self.cfg.descriptor_len());
        let mut buf = vec![Complex::new(0.0, 0.0); n * n];
        let norm = 1.0 / (n * n) as f32;
        for f in &self.filters {
            for i in 0..n * n {
                buf[i] = spec[i] * f[i];
            }
            self.fft2(&mut buf, true);
            for gy in 0..g {
                let (y0, y1) = (gy * n / g, (gy + 1) * n / g);
                for gx in 0..g {
                    let (x0, x1) = (gx * n / g, (gx + 1) * n / g);
                    let mut acc = 0f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += (buf[y * n + x].norm() * norm) as f64;
                        }
                    }
                    out.push((acc / ((y1 - y0) * (x1 - x0)) as f64) as f32);
                }
            }
        }
        Ok(out)
    }

    /// Descriptor of an interleaved 8-bit image with 1 or 3 channels,
    /// resized to `size x size` and averaged to gray.
    pub fn describe_u8(&self, pixels: &[u8], height: usize, width: usize, channels: usize) -> Result<Vec<f32>> {
        if pixels.len() != height * width * channels || !(channels == 1 || channels == 3) {
            return Err(Error::precondition("expected a 1- or 3-channel pixel buffer matching the stated shape"));
        }
        let rgb = if channels == 3 { pixels.to_vec() } else { pixels.iter().flat_map(|&v| [v; 3]).collect() };
        let n = self.cfg.size;
        let gray: Vec<f32> = if height == n && width == n {
            rgb.chunks_exact(3).map(|p| p.iter().map(|&v| v as f32).sum::<f32>() / 3.0).collect()
        } else {
            let src = SourceImage::from_rgb("gist", height, width, rgb)?;
            let r = resize_region(&src, Region { top: 0, left: 0, height, width }, n, n);
            r.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
        };
        self.describe_gray(&gray)
    }
}

/// Scale to unit L2 norm (zero vectors are returned unchanged).
pub fn l2_normalize(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| (*x as f64 / n) as f32).collect()
    }
}

/// Histogram over [0, 2] of all pairwise Euclidean distances between
/// L2-normalized descriptors.
pub fn gist_distance_histogram(descriptors: &[Vec<f32>], bins: usize) -> Result<(Histogram, Vec<f64>)> {
    if descriptors.len() < 2 {
        return Err(Error::precondition("need at least 2 descriptors"));
    }
    let normed: Vec<Vec<f32>> = descriptors.iter().map(|d| l2_normalize(d)).collect();
    let mut dists = Vec::with_capacity(normed.len() * (normed.len() - 1) / 2);
    for i in 0..normed.len() {
        for j in i + 1..normed.len() {
            let d: f64 = normed[i].iter().zip(&normed[j]).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt();
            dists.push(d);
        }
    }
    let h = Histogram::from_values(dists.iter().copied(), 0.0, 2.0, bins)?;
    Ok((h, dists))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_shape_and_peak() {
        let cfg = GistConfig { size: 64, ..Default::default() };
        let bank = gabor_bank(&cfg);
        assert_eq!(bank.len(), 32);
        // Scale 0 peaks near radius 0.3 * n along orientation 0 (the fx axis).
        let n = 64;
        let r = (0.3 * n as f64).round() as usize;
        let on_axis = bank[0][r];
        assert!(on_axis > 0.9, "{on_axis}");
        // DC response is exp(-3.5) for every filter.
        assert!((bank[0][0] - (-3.5f32).exp()).abs() < 1e-6);
    }

    #[test]
    fn descriptor_len_and_determinism() {
        let g = Gist::new(GistConfig { size: 64, ..Default::default() }).unwrap();
        let img: Vec<u8> = (0..32 * 32 * 3).map(|i| ((i * 37) % 251) as u8).collect();
        let a = g.describe_u8(&img, 32, 32, 3).unwrap();
        let b = g.describe_u8(&img, 32, 32, 3).unwrap();
        assert_eq!(a.len(), 512);
        assert_eq!(a, b);
        let n = l2_normalize(&a);
        let norm: f64 = n.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        let (h, d) = gist_distance_histogram(&[a.clone(), a], 20).unwrap();
        assert_eq!(d, vec![0.0]);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.total(), 1);
    }
}
