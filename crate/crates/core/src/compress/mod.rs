//! Data-free compression: one-shot per-tensor magnitude pruning and 8-bit
//! symmetric weight quantization, each recovered by self-distillation from
//! the uncompressed model.
//!
//! Only weight tensors with two or more dimensions (conv kernels, linear
//! matrices) are compressed; biases and normalization parameters are left
//! untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::{InputSource, LabeledData};
use crate::distillery::{distill, DistillConfig, DistillOutcome, StepHook};
use crate::error::{Error, Result};
use crate::modelzoo::{to_vec_f32, Model};
use crate::run::RunDir;

/// Whether a named parameter is subject to compression.
pub fn is_compressible(t: &Tensor) -> bool {
    t.dim() >= 2
}

/// Keep-masks (true = kept) per pruned parameter name.
#[derive(Debug, Default)]
pub struct Masks {
    pub masks: BTreeMap<String, Tensor>,
}

impl Masks {
    /// Zero every masked position of `model` in place.
    pub fn apply(&self, model: &Model) -> Result<()> {
        for (name, p) in model.params() {
            if let Some(m) = self.masks.get(name) {
                let mut p = p.shallow_clone();
                tch::no_grad(|| {
                    let _ = p.masked_fill_(&m.logical_not(), 0.0);
                });
            }
        }
        Ok(())
    }

    fn mask_grads(&self, model: &Model) {
        for (name, p) in model.params() {
            if let Some(m) = self.masks.get(name) {
                let mut g = p.grad();
                if g.defined() {
                    let _ = g.masked_fill_(&m.logical_not(), 0.0);
                }
            }
        }
    }

    /// `(name, total, pruned)` per masked tensor.
    pub fn summary(&self) -> Vec<(String, usize, usize)> {
        self.masks
            .iter()
            .map(|(n, m)| {
                let total = m.numel();
                let kept = m.to_kind(Kind::Int64).sum(Kind::Int64).int64_value(&[]) as usize;
                (n.clone(), total, total - kept)
            })
            .collect()
    }
}

/// Keep-mask zeroing the `floor(sparsity * n)` smallest magnitudes; ties go
/// to the lower flat index.
pub fn prune_mask(values: &[f32], sparsity: f64) -> Vec<bool> {
    let k = (sparsity * values.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
    let mut keep = vec![true; values.len()];
    for &i in &idx[..k] {
        keep[i] = false;
    }
    keep
}

/// Prune `model` in place and return the masks.
pub fn magnitude_prune(model: &Model, sparsity: f64) -> Result<Masks> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::config(format!("sparsity must be in [0, 1), got {sparsity}")));
    }
    let mut masks = BTreeMap::new();
    for (name, p) in model.params() {
        if !is_compressible(p) {
            continue;
        }
        let keep = prune_mask(&to_vec_f32(p), sparsity);
        masks.insert(name.clone(), Tensor::from_slice(&keep).view(p.size().as_slice()));
    }
    let masks = Masks { masks };
    masks.apply(model)?;
    Ok(masks)
}

/// Keeps pruned weights at zero throughout finetuning.
#[derive(Debug)]
pub struct MaskHook {
    pub masks: Masks,
}

impl StepHook for MaskHook {
    fn before_update(&mut self, model: &Model) -> Result<()> {
        self.masks.mask_grads(model);
        Ok(())
    }

    fn after_update(&mut self, model: &Model) -> Result<()> {
        self.masks.apply(model)
    }

    fn aux_tensors(&self) -> Vec<(String, Tensor)> {
        self.masks.masks.iter().map(|(n, m)| (format!("mask.{n}"), m.shallow_clone())).collect()
    }

    fn restore(&mut self, model: &Model, aux: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, m) in self.masks.masks.iter_mut() {
            let saved = aux
                .get(&format!("mask.{name}"))
                .ok_or_else(|| Error::format("checkpoint", format!("missing mask for `{name}`")))?;
            *m = saved.to_kind(Kind::Bool);
        }
        self.masks.apply(model)
    }
}

/// Symmetric 8-bit quantization: `scale = max|w| / 127` (1 for an all-zero
/// tensor), `q = clamp(round(w / scale), -127, 127)`.
pub fn quantize_values(w: &[f32]) -> (f32, Vec<i8>) {
    let max = w.iter().fold(0f32, |m, v| m.max(v.abs()));
    let scale = if max == 0.0 { 1.0 } else { max / 127.0 };
    let q = w
        .iter()
        .map(|&v| ((v as f64 / scale as f64).round()).clamp(-127.0, 127.0) as i8)
        .collect();
    (scale, q)
}

pub fn dequantize_values(q: &[i8], scale: f32) -> Vec<f32> {
    q.iter().map(|&v| (v as f64 * scale as f64) as f32).collect()
}

fn fake_quant(t: &Tensor) -> (f32, Tensor) {
    let (scale, q) = quantize_values(&to_vec_f32(t));
    (scale, Tensor::from_slice(&dequantize_values(&q, scale)).view(t.size().as_slice()))
}

/// Quantization scale per tensor name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub scales: BTreeMap<String, f32>,
}

/// Replace every compressible weight with its dequantized 8-bit value.
pub fn quantize_8bit(model: &Model) -> Result<QuantReport> {
    let mut scales = BTreeMap::new();
    for (name, p) in model.params() {
        if !is_compressible(p) {
            continue;
        }
        let (scale, dq) = fake_quant(p);
        model.set_tensor(name, &dq)?;
        scales.insert(name.clone(), scale);
    }
    Ok(QuantReport { scales })
}

/// Quantization-aware finetuning with a straight-through estimator: the
/// forward pass sees quantized weights, the update is applied to float
/// master weights.
#[derive(Debug, Default)]
pub struct QuantHook {
    master: BTreeMap<String, Tensor>,
}

impl QuantHook {
    fn quantize_from_current(&mut self, model: &Model) -> Result<()> {
        for (name, p) in model.params() {
            if is_compressible(p) {
                self.master.insert(name.clone(), p.detach().copy());
                model.set_tensor(name, &fake_quant(p).1)?;
            }
        }
        Ok(())
    }

    fn restore_master(&self, model: &Model) -> Result<()> {
        for (name, m) in &self.master {
            model.set_tensor(name, m)?;
        }
        Ok(())
    }
}

impl StepHook for QuantHook {
    fn before_forward(&mut self, model: &Model) -> Result<()> {
        self.quantize_from_current(model)
    }

    fn before_update(&mut self, model: &Model) -> Result<()> {
        self.restore_master(model)
    }

    fn before_eval(&mut self, model: &Model) -> Result<()> {
        self.quantize_from_current(model)
    }

    fn after_eval(&mut self, model: &Model) -> Result<()> {
        self.restore_master(model)
    }

    fn aux_tensors(&self) -> Vec<(String, Tensor)> {
        self.master.iter().map(|(n, t)| (format!("master.{n}"), t.shallow_clone())).collect()
    }

    fn restore(&mut self, model: &Model, aux: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, t) in aux {
            if let Some(n) = name.strip_prefix("master.") {
                model.set_tensor(n, t)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CompressionMethod {
    Prune { sparsity: f64 },
    Quantize { bits: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub method: CompressionMethod,
    pub finetune: DistillConfig,
}

impl CompressionPlan {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            CompressionMethod::Prune { sparsity } if !(0.0..1.0).contains(&sparsity) => {
                Err(Error::config(format!("sparsity must be in [0, 1), got {sparsity}")))
            }
            CompressionMethod::Quantize { bits } if bits != 8 => {
                Err(Error::config(format!("only 8-bit quantization is supported, got {bits}")))
            }
            _ => self.finetune.validate(),
        }
    }
}

#[derive(Debug)]
pub struct CompressOutcome {
    pub student: Model,
    pub distill: Option<DistillOutcome>,
    /// `(name, total, pruned)` for pruning runs.
    pub sparsity: Vec<(String, usize, usize)>,
    pub quant: Option<QuantReport>,
}

/// Clone `pretrained` as student, compress it, and finetune it against the
/// uncompressed original on `patches`.
pub fn compress_with_self_distillation(
    pretrained: &Model,
    plan: &CompressionPlan,
    patches: &dyn InputSource,
    eval: Option<&LabeledData>,
    run: &RunDir,
) -> Result<CompressOutcome> {
    plan.validate()?;
    let mut teacher = pretrained.try_clone()?;
    teacher.freeze();
    let mut student = pretrained.try_clone()?;
    student.unfreeze();
    let finetune = plan.finetune.train.epochs > 0;
    match plan.method {
        CompressionMethod::Prune { sparsity } => {
            let masks = magnitude_prune(&student, sparsity)?;
            let mut hook = MaskHook { masks };
            let d = if finetune {
                Some(distill(&teacher, &student, patches, eval, &plan.finetune, run, Some(&mut hook))?)
            } else {
                None
            };
            hook.masks.apply(&student)?;
            Ok(CompressOutcome { sparsity: hook.masks.summary(), student, distill: d, quant: None })
        }
        CompressionMethod::Quantize { .. } => {
            let mut hook = QuantHook::default();
            let d = if finetune {
                Some(distill(&teacher, &student, patches, eval, &plan.finetune, run, Some(&mut hook))?)
            } else {
                None
            };
            let report = quantize_8bit(&student)?;
            Ok(CompressOutcome { student, distill: d, sparsity: Vec::new(), quant: Some(report) })
        }
    }
}
