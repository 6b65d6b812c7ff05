//! Distillation objectives.
//!
//! The KL objective compares teacher and student distributions softened at
//! the same temperature and is *not* rescaled by τ², so its gradient with
//! respect to the student logits is `(p_s - p_t) / τ`.

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Which objective couples teacher and student logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Kl,
    L1,
    L2,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Self::Kl),
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            _ => Err(Error::config(format!("unknown loss `{s}` (expected kl, l1 or l2)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::L1 => "l1",
            Self::L2 => "l2",
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("temperature must be positive and finite, got {tau}")))
    }
}

fn check_pair(t: &[f64], s: &[f64]) -> Result<()> {
    if t.len() != s.len() || t.is_empty() {
        return Err(Error::precondition(format!(
            "teacher has {} logits, student has {}",
            t.len(),
            s.len()
        )));
    }
    Ok(())
}

/// `log softmax(l / τ)` with max subtraction.
pub fn log_soften(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("logits must be finite"));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / tau).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scaled.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(scaled.iter().map(|v| v - lse).collect())
}

/// `softmax(l / τ)`.
pub fn soften(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    Ok(log_soften(logits, tau)?.into_iter().map(f64::exp).collect())
}

/// KL(p_t ‖ p_s) between the softened distributions.
pub fn kd_loss(teacher: &[f64], student: &[f64], tau: f64) -> Result<f64> {
    check_pair(teacher, student)?;
    let lt = log_soften(teacher, tau)?;
    let ls = log_soften(student, tau)?;
    let kl: f64 = lt.iter().zip(&ls).map(|(a, b)| a.exp() * (a - b)).sum();
    Ok(kl.max(0.0))
}

/// Gradient of [`kd_loss`] with respect to the student logits.
pub fn kd_grad(teacher: &[f64], student: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_pair(teacher, student)?;
    let pt = soften(teacher, tau)?;
    let ps = soften(student, tau)?;
    Ok(ps.iter().zip(&pt).map(|(s, t)| (s - t) / tau).collect())
}

/// Mean absolute (`L1`) or squared (`L2`) difference of `logits / τ`.
pub fn logit_regression_loss(teacher: &[f64], student: &[f64], tau: f64, kind: LossKind) -> Result<f64> {
    check_pair(teacher, student)?;
    check_tau(tau)?;
    let n = teacher.len() as f64;
    let diffs = teacher.iter().zip(student).map(|(t, s)| (t - s) / tau);
    match kind {
        LossKind::L1 => Ok(diffs.map(f64::abs).sum::<f64>() / n),
        LossKind::L2 => Ok(diffs.map(|d| d * d).sum::<f64>() / n),
        LossKind::Kl => Err(Error::config("logit_regression_loss needs l1 or l2")),
    }
}

/// Batched softmax at temperature τ: `(N, C)` logits to `(N, C)` probabilities.
pub fn soften_batch(logits: &Tensor, tau: f64) -> Tensor {
    (logits / tau).softmax(-1, Kind::Float)
}

/// Batch-mean KL(p_t ‖ softmax(s/τ)) for target probabilities `p_t` that
/// may contain zeros (degraded signals).
pub fn kd_loss_batch(target: &Tensor, student_logits: &Tensor, tau: f64) -> Tensor {
    let log_ps = (student_logits / tau).log_softmax(-1, Kind::Float);
    // 0 * ln(tiny) = 0, so zero entries drop out of the entropy term.
    let log_pt = target.clamp_min(1e-30).log();
    (target * (log_pt - log_ps)).sum_dim_intlist(-1, false, Kind::Float).mean(Kind::Float)
}

/// Batch version of [`logit_regression_loss`], averaged over all entries.
pub fn regression_loss_batch(teacher_logits: &Tensor, student_logits: &Tensor, tau: f64, kind: LossKind) -> Tensor {
    let d = (student_logits - teacher_logits) / tau;
    match kind {
        LossKind::L2 => d.square().mean(Kind::Float),
        _ => d.abs().mean(Kind::Float),
    }
}
