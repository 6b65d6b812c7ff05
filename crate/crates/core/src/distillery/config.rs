//! Training configuration and named presets.

use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::mix::MixKind;
use super::optim::{OptimizerConfig, Schedule};
use super::signal::SignalMode;
use crate::error::{Error, Result};

/// Compute budget: `pilot` for desk-scale checks, `paper` for full-length
/// runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Pilot,
    Paper,
}

impl Budget {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pilot" => Ok(Self::Pilot),
            "paper" => Ok(Self::Paper),
            _ => Err(Error::config(format!("unknown budget `{s}` (expected pilot or paper)"))),
        }
    }

    /// Distillation epochs over the generated dataset.
    pub fn distill_epochs(self) -> u64 {
        match self {
            Self::Pilot => 30,
            Self::Paper => 1000,
        }
    }
}

/// Loop settings shared by distillation and supervised training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    /// Updates per epoch; `None` means one pass over the training data.
    #[serde(default)]
    pub steps_per_epoch: Option<u64>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Apply the data source's flip/crop (images) or random-offset (audio)
    /// augmentation before mixing.
    #[serde(default = "yes")]
    pub standard_aug: bool,
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
    /// Log per-class validation accuracy each epoch.
    #[serde(default)]
    pub per_class_eval: bool,
    /// Continue from `checkpoints/last` when present.
    #[serde(default = "yes")]
    pub resume: bool,
}

fn yes() -> bool {
    true
}

fn default_eval_batch() -> usize {
    500
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::config("steps_per_epoch must be positive"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub temperature: f64,
    pub loss: LossKind,
    pub signal: SignalMode,
    /// Renormalize retained top-k mass to sum to one.
    #[serde(default = "yes")]
    pub topk_renorm: bool,
    pub mix: MixKind,
    #[serde(default = "quarter")]
    pub cutmix_alpha: f64,
    #[serde(default = "quarter")]
    pub cutmix_beta: f64,
    pub train: TrainConfig,
}

fn quarter() -> f64 {
    0.25
}

impl DistillConfig {
    /// Small-scale images: Adam at 1e-3, batch 512, cutmix Beta(0.25, 0.25).
    pub fn small_scale(budget: Budget) -> Self {
        Self {
            temperature: 8.0,
            loss: LossKind::Kl,
            signal: SignalMode::Full,
            topk_renorm: true,
            mix: MixKind::Cutmix,
            cutmix_alpha: 0.25,
            cutmix_beta: 0.25,
            train: TrainConfig {
                epochs: budget.distill_epochs(),
                batch_size: 512,
                steps_per_epoch: None,
                seed: 0,
                optimizer: OptimizerConfig::adam(1e-3),
                standard_aug: true,
                eval_batch_size: default_eval_batch(),
                per_class_eval: false,
                resume: true,
            },
        }
    }

    /// Large-scale images: AdamW at 0.01, weight decay 1e-4, cosine decay,
    /// cutmix Beta(1, 1).
    pub fn large_scale(budget: Budget, steps_per_epoch: u64) -> Self {
        let mut c = Self::small_scale(budget);
        c.cutmix_alpha = 1.0;
        c.cutmix_beta = 1.0;
        c.train.steps_per_epoch = Some(steps_per_epoch);
        c.train.optimizer = OptimizerConfig::adamw(
            0.01,
            1e-4,
            Schedule::Cosine { total_steps: c.train.epochs * steps_per_epoch, warmup_steps: 0 },
        );
        c
    }

    /// Audio: Adam at 1e-3, batch 512, mixup.
    pub fn audio(budget: Budget) -> Self {
        let mut c = Self::small_scale(budget);
        c.mix = MixKind::Mixup;
        c
    }

    pub fn preset(name: &str, budget: Budget) -> Result<Self> {
        match name {
            "small" | "small-scale" | "cifar" => Ok(Self::small_scale(budget)),
            "large" | "large-scale" | "imagenet" => Ok(Self::large_scale(budget, 1000)),
            "audio" => Ok(Self::audio(budget)),
            _ => Err(Error::config(format!("unknown distillation preset `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let SignalMode::TopK(0) = self.signal {
            return Err(Error::config("top-k needs k >= 1"));
        }
        if self.loss != LossKind::Kl && self.signal != SignalMode::Full {
            return Err(Error::config(format!(
                "{} regression works on logits and needs signal=full, got {}",
                self.loss.name(),
                self.signal
            )));
        }
        if self.mix == MixKind::Cutmix && !(self.cutmix_alpha > 0.0 && self.cutmix_beta > 0.0) {
            return Err(Error::config("cutmix alpha and beta must be positive"));
        }
        if self.mix != MixKind::None && self.train.batch_size < 2 {
            return Err(Error::config("mixing needs batch_size >= 2"));
        }
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip_toml() {
        for c in [
            DistillConfig::small_scale(Budget::Pilot),
            DistillConfig::large_scale(Budget::Paper, 100),
            DistillConfig::audio(Budget::Pilot),
        ] {
            c.validate().unwrap();
            let text = toml::to_string(&c).unwrap();
            let back: DistillConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = DistillConfig::small_scale(Budget::Pilot);
        c.temperature = 0.0;
        assert!(c.validate().is_err());
        let mut c = DistillConfig::small_scale(Budget::Pilot);
        c.loss = LossKind::L2;
        c.signal = SignalMode::Hard;
        assert!(c.validate().is_err());
        let mut c = DistillConfig::small_scale(Budget::Pilot);
        c.cutmix_alpha = 0.0;
        assert!(c.validate().is_err());
        assert!(toml::from_str::<DistillConfig>("temperature = 8\nbogus = 1").is_err());
    }
}
