//! Batch-level mixing augmentations. Only inputs are mixed: supervision
//! comes from the teacher's response to the mixed input itself.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixKind {
    None,
    Mixup,
    Cutmix,
}

impl MixKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "mixup" => Ok(Self::Mixup),
            "cutmix" => Ok(Self::Cutmix),
            _ => Err(Error::config(format!("unknown mix `{s}` (expected none, mixup or cutmix)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Mixup => "mixup",
            Self::Cutmix => "cutmix",
        }
    }
}

/// Mixed inputs plus the per-sample coefficient and partner index.
#[derive(Debug)]
pub struct MixedBatch {
    pub inputs: Tensor,
    /// Fraction of each output taken from its own (base) input.
    pub lambda: Vec<f64>,
    /// `pairing[i]` is the partner of sample `i`.
    pub pairing: Vec<usize>,
}

/// Half-open pixel box `[y0, y1) x [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutBox {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    /// Box with side fractions `sqrt(1 - lam0)` centred at `(cy, cx)`,
    /// clamped to the image.
    pub fn around(h: usize, w: usize, lam0: f64, cy: usize, cx: usize) -> Self {
        let r = (1.0 - lam0).clamp(0.0, 1.0).sqrt();
        let ch = (h as f64 * r).floor() as usize;
        let cw = (w as f64 * r).floor() as usize;
        let clamp = |c: usize, half: usize, lim: usize, up: bool| -> usize {
            if up {
                (c + half).min(lim)
            } else {
                c.saturating_sub(half)
            }
        };
        Self {
            y0: clamp(cy, ch / 2, h, false),
            y1: clamp(cy, ch - ch / 2, h, true),
            x0: clamp(cx, cw / 2, w, false),
            x1: clamp(cx, cw - cw / 2, w, true),
        }
    }
}

fn check_batch(x: &Tensor) -> Result<usize> {
    let n = x.size().first().copied().unwrap_or(0) as usize;
    if n < 2 {
        return Err(Error::precondition(format!("mixing needs a batch of at least 2, got {n}")));
    }
    Ok(n)
}

fn permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `out_i = λ_i x_i + (1 - λ_i) x_{π(i)}` with `λ_i ~ U(0, 1)`.
pub fn mixup<R: Rng>(x: &Tensor, rng: &mut R) -> Result<MixedBatch> {
    let n = check_batch(x)?;
    let lambda: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let pairing = permutation(n, rng);
    mixup_with(x, &lambda, &pairing)
}

/// Deterministic core of [`mixup`].
pub fn mixup_with(x: &Tensor, lambda: &[f64], pairing: &[usize]) -> Result<MixedBatch> {
    let n = check_batch(x)?;
    if lambda.len() != n || pairing.len() != n {
        return Err(Error::precondition("lambda/pairing length must equal the batch size"));
    }
    let mut shape = vec![n as i64];
    shape.extend(std::iter::repeat_n(1i64, x.dim() - 1));
    let lam: Vec<f32> = lambda.iter().map(|&l| l as f32).collect();
    let lam = Tensor::from_slice(&lam).view(shape.as_slice()).to_kind(x.kind());
    let partner = x.index_select(0, &Tensor::from_slice(&to_i64(pairing)));
    let inputs = &lam * x + (lam.ones_like() - &lam) * partner;
    Ok(MixedBatch { inputs, lambda: lambda.to_vec(), pairing: pairing.to_vec() })
}

fn to_i64(v: &[usize]) -> Vec<i64> {
    v.iter().map(|&i| i as i64).collect()
}

/// CutMix with one box per sample: `λ0 ~ Beta(α, β)`, box centre uniform,
/// stored λ recomputed from the clamped box.
pub fn cutmix<R: Rng>(x: &Tensor, alpha: f64, beta: f64, rng: &mut R) -> Result<MixedBatch> {
    let (n, h, w) = spatial(x)?;
    let dist = Beta::new(alpha, beta).map_err(|e| Error::config(format!("cutmix Beta({alpha}, {beta}): {e}")))?;
    let boxes: Vec<CutBox> = (0..n)
        .map(|_| {
            let lam0 = dist.sample(rng);
            let cy = rng.random_range(0..h);
            let cx = rng.random_range(0..w);
            CutBox::around(h, w, lam0, cy, cx)
        })
        .collect();
    let pairing = permutation(n, rng);
    cutmix_with(x, &boxes, &pairing)
}

fn spatial(x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.size();
    if s.len() != 4 || s[2] != s[3] {
        return Err(Error::UnsupportedMix(format!(
            "cutmix needs square (N, C, H, W) inputs, got shape {s:?}"
        )));
    }
    Ok((check_batch(x)?, s[2] as usize, s[3] as usize))
}

/// Deterministic core of [`cutmix`]: paste `x[pairing[i]]` inside `boxes[i]`.
pub fn cutmix_with(x: &Tensor, boxes: &[CutBox], pairing: &[usize]) -> Result<MixedBatch> {
    let (n, h, w) = spatial(x)?;
    if boxes.len() != n || pairing.len() != n {
        return Err(Error::precondition("boxes/pairing length must equal the batch size"));
    }
    let mut mask = vec![false; n * h * w];
    let mut lambda = Vec::with_capacity(n);
    for (i, b) in boxes.iter().enumerate() {
        if b.y1 > h || b.x1 > w || b.y0 > b.y1 || b.x0 > b.x1 {
            return Err(Error::precondition(format!("box {b:?} outside {h}x{w}")));
        }
        for y in b.y0..b.y1 {
            mask[(i * h + y) * w + b.x0..(i * h + y) * w + b.x1].fill(true);
        }
        lambda.push(1.0 - b.area() as f64 / (h * w) as f64);
    }
    let mask = Tensor::from_slice(&mask).view([n as i64, 1, h as i64, w as i64]);
    let partner = x.index_select(0, &Tensor::from_slice(&to_i64(pairing)));
    let inputs = partner.where_self(&mask, x);
    Ok(MixedBatch { inputs, lambda, pairing: pairing.to_vec() })
}

/// Apply the configured mix; `None` passes the batch through untouched.
pub fn apply_mix<R: Rng>(x: &Tensor, kind: MixKind, alpha: f64, beta: f64, rng: &mut R) -> Result<MixedBatch> {
    match kind {
        MixKind::None => {
            let n = x.size().first().copied().unwrap_or(0) as usize;
            Ok(MixedBatch { inputs: x.shallow_clone(), lambda: vec![1.0; n], pairing: (0..n).collect() })
        }
        MixKind::Mixup => mixup(x, rng),
        MixKind::Cutmix => cutmix(x, alpha, beta, rng),
    }
}
