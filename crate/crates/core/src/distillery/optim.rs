//! First-order optimizers and learning-rate schedules with serializable
//! state, operating on named parameter lists.

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamw,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::Adamw),
            _ => Err(Error::config(format!("unknown optimizer `{s}` (expected sgd, adam or adamw)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over `total_steps`,
    /// after a linear warmup.
    Cosine {
        total_steps: u64,
        #[serde(default)]
        warmup_steps: u64,
    },
    /// `values[i]` applies to steps before `boundaries[i]`; the last value
    /// holds afterwards. Absolute rates, the base rate is ignored.
    Piecewise { boundaries: Vec<u64>, values: Vec<f64> },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::Constant => Ok(()),
            Schedule::Cosine { total_steps, warmup_steps } => {
                if *total_steps == 0 || warmup_steps > total_steps {
                    return Err(Error::config("cosine schedule needs 0 <= warmup_steps <= total_steps, total > 0"));
                }
                Ok(())
            }
            Schedule::Piecewise { boundaries, values } => {
                if values.is_empty() || boundaries.len() != values.len() {
                    return Err(Error::config("piecewise schedule needs one value per boundary"));
                }
                if boundaries.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config("piecewise boundaries must be strictly increasing"));
                }
                Ok(())
            }
        }
    }

    /// Learning rate at `step` (0-based).
    pub fn lr_at(&self, base: f64, step: u64) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine { total_steps, warmup_steps } => {
                if step < *warmup_steps {
                    return base * (step + 1) as f64 / *warmup_steps as f64;
                }
                let span = (total_steps - warmup_steps).max(1) as f64;
                let t = ((step - warmup_steps) as f64 / span).min(1.0);
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
            Schedule::Piecewise { boundaries, values } => {
                let i = boundaries.iter().position(|&b| step < b).unwrap_or(values.len() - 1);
                values[i]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub nesterov: bool,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub schedule: Schedule,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay: 0.0,
            momentum: 0.0,
            nesterov: false,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            schedule: Schedule::Constant,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64, schedule: Schedule) -> Self {
        Self { kind: OptimizerKind::Adamw, weight_decay, schedule, ..Self::adam(lr) }
    }

    pub fn sgd(lr: f64, momentum: f64, nesterov: bool, weight_decay: f64, schedule: Schedule) -> Self {
        Self { kind: OptimizerKind::Sgd, momentum, nesterov, weight_decay, schedule, ..Self::adam(lr) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("weight_decay must be >= 0 and momentum in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::config("adam betas must be in [0, 1) and eps > 0"));
        }
        if self.nesterov && self.momentum == 0.0 {
            return Err(Error::config("nesterov needs momentum > 0"));
        }
        self.schedule.validate()
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.schedule.lr_at(self.lr, step)
    }
}

/// Optimizer over a fixed, ordered list of named parameters.
#[derive(Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    names: Vec<String>,
    /// First moment / momentum buffer per parameter.
    m: Vec<Tensor>,
    /// Second moment per parameter (Adam variants only).
    v: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &[(String, Tensor)]) -> Result<Self> {
        cfg.validate()?;
        let zeros = || params.iter().map(|(_, p)| p.detach().zeros_like()).collect::<Vec<_>>();
        let v = if cfg.kind == OptimizerKind::Sgd { Vec::new() } else { zeros() };
        Ok(Self { names: params.iter().map(|(n, _)| n.clone()).collect(), m: zeros(), v, cfg, steps: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f64 {
        self.cfg.lr_at(self.steps)
    }

    pub fn zero_grad(&self, params: &[(String, Tensor)]) {
        for (_, p) in params {
            let mut g = p.grad();
            if g.defined() {
                let _ = g.zero_();
            }
        }
    }

    /// Apply one update from the accumulated gradients. Parameters without
    /// a gradient are left alone.
    pub fn step(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        if params.len() != self.names.len() || params.iter().zip(&self.names).any(|((a, _), b)| a != b) {
            return Err(Error::precondition("optimizer parameter list changed since construction"));
        }
        let lr = self.current_lr();
        let c = &self.cfg;
        let t = (self.steps + 1) as i32;
        tch::no_grad(|| {
            for (i, (_, p)) in params.iter().enumerate() {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let mut p = p.shallow_clone();
                match c.kind {
                    OptimizerKind::Sgd => {
                        let g = if c.weight_decay > 0.0 { &g + &p * c.weight_decay } else { g };
                        let d = if c.momentum > 0.0 {
                            let buf = &self.m[i] * c.momentum + &g;
                            self.m[i].copy_(&buf);
                            if c.nesterov {
                                &g + buf * c.momentum
                            } else {
                                buf
                            }
                        } else {
                            g
                        };
                        let _ = p.g_sub_(&(d * lr));
                    }
                    OptimizerKind::Adam | OptimizerKind::Adamw => {
                        let g = if c.kind == OptimizerKind::Adam && c.weight_decay > 0.0 {
                            &g + &p * c.weight_decay
                        } else {
                            g
                        };
                        if c.kind == OptimizerKind::Adamw && c.weight_decay > 0.0 {
                            let _ = p.g_mul_scalar_(1.0 - lr * c.weight_decay);
                        }
                        let m = &self.m[i] * c.beta1 + &g * (1.0 - c.beta1);
                        let v = &self.v[i] * c.beta2 + g.square() * (1.0 - c.beta2);
                        self.m[i].copy_(&m);
                        self.v[i].copy_(&v);
                        let mhat = m / (1.0 - c.beta1.powi(t));
                        let vhat = v / (1.0 - c.beta2.powi(t));
                        let _ = p.g_sub_(&(mhat / (vhat.sqrt() + c.eps) * lr));
                    }
                }
            }
        });
        self.steps += 1;
        Ok(())
    }

    /// State tensors for checkpointing, named `optim.<m|v>.<param>`.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, n) in self.names.iter().enumerate() {
            out.push((format!("optim.m.{n}"), self.m[i].shallow_clone()));
            if let Some(v) = self.v.get(i) {
                out.push((format!("optim.v.{n}"), v.shallow_clone()));
            }
        }
        out.push(("optim.steps".into(), Tensor::from_slice(&[self.steps as i64])));
        out
    }

    /// Restore from tensors produced by [`Optimizer::state_tensors`].
    pub fn load_state(&mut self, aux: &std::collections::BTreeMap<String, Tensor>) -> Result<()> {
        let get = |key: String| {
            aux.get(&key)
                .map(Tensor::shallow_clone)
                .ok_or_else(|| Error::format("checkpoint", format!("missing optimizer tensor `{key}`")))
        };
        for (i, n) in self.names.clone().iter().enumerate() {
            let m = get(format!("optim.m.{n}"))?;
            tch::no_grad(|| self.m[i].copy_(&m));
            if i < self.v.len() {
                let v = get(format!("optim.v.{n}"))?;
                tch::no_grad(|| self.v[i].copy_(&v));
            }
        }
        self.steps = get("optim.steps".into())?.int64_value(&[0]) as u64;
        Ok(())
    }
}
