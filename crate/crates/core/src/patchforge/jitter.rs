//! Photometric jitter on 0..=255 rasters. Every sub-operation clamps to the
//! valid range before the next one runs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterStrengths {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl Default for JitterStrengths {
    fn default() -> Self {
        Self {
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterOp {
    Brightness(f32),
    Contrast(f32),
    Saturation(f32),
    Hue(f32),
}

/// Sample the four factors and a random application order.
pub fn sample_ops<R: Rng>(s: &JitterStrengths, rng: &mut R) -> [JitterOp; 4] {
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);
    let b = uniform(rng, 1.0 - s.brightness, 1.0 + s.brightness).max(0.0);
    let c = uniform(rng, 1.0 - s.contrast, 1.0 + s.contrast).max(0.0);
    let sat = uniform(rng, 1.0 - s.saturation, 1.0 + s.saturation).max(0.0);
    let h = uniform(rng, -s.hue, s.hue);
    let all = [
        JitterOp::Brightness(b),
        JitterOp::Contrast(c),
        JitterOp::Saturation(sat),
        JitterOp::Hue(h),
    ];
    order.map(|i| all[i])
}

fn uniform<R: Rng>(rng: &mut R, lo: f32, hi: f32) -> f32 {
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f32>()
    }
}

#[inline]
fn gray(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn apply(img: &mut Raster, op: JitterOp) {
    match op {
        JitterOp::Brightness(f) => img.data.iter_mut().for_each(|v| *v = (*v * f).clamp(0.0, 255.0)),
        JitterOp::Contrast(f) => {
            let n = img.data.len() / 3;
            let mean = img
                .data
                .chunks_exact(3)
                .map(|p| gray(p[0], p[1], p[2]) as f64)
                .sum::<f64>()
                / n as f64;
            let mean = mean as f32;
            img.data
                .iter_mut()
                .for_each(|v| *v = (mean + f * (*v - mean)).clamp(0.0, 255.0));
        }
        JitterOp::Saturation(f) => {
            for p in img.data.chunks_exact_mut(3) {
                let g = gray(p[0], p[1], p[2]);
                for v in p.iter_mut() {
                    *v = (g + f * (*v - g)).clamp(0.0, 255.0);
                }
            }
        }
        JitterOp::Hue(shift) => {
            for p in img.data.chunks_exact_mut(3) {
                let (h, s, v) = rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0);
                let (r, g, b) = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
                p[0] = (r * 255.0).clamp(0.0, 255.0);
                p[1] = (g * 255.0).clamp(0.0, 255.0);
                p[2] = (b * 255.0).clamp(0.0, 255.0);
            }
        }
    }
}

/// Hue in [0, 1), saturation and value in [0, 1].
pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, v)
}

pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}
