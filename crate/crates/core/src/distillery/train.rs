//! Training loops: teacher-to-student distillation and plain supervised
//! training, sharing epoch bookkeeping, checkpointing and resume.

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::config::{Budget, DistillConfig, TrainConfig};
use super::eval::evaluate;
use super::loss::{kd_loss_batch, regression_loss_batch, soften_batch, LossKind};
use super::mix::apply_mix;
use super::optim::{Optimizer, OptimizerConfig, Schedule};
use super::signal::degrade_batch;
use crate::data::{InputSource, LabeledData};
use crate::error::{Error, Result};
use crate::modelzoo::{load_checkpoint, save_checkpoint, CheckpointMeta, Classifier, Family, Model};
use crate::run::{DivergenceRecord, EpochRecord, RunDir};
use crate::seed::named_stream;

/// A trainable classifier: forward passes go through [`Classifier`], the
/// update touches the parameters of [`Student::model`].
pub trait Student: Classifier {
    fn model(&self) -> &Model;
}

impl Student for Model {
    fn model(&self) -> &Model {
        self
    }
}

/// Callbacks around each update, used to impose constraints such as
/// pruning masks or simulated quantization.
pub trait StepHook {
    fn before_forward(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    /// After backward, before the optimizer consumes the gradients.
    fn before_update(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    fn after_update(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    /// Called before evaluation and checkpointing at the end of an epoch.
    fn before_eval(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    fn after_eval(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    /// Extra tensors to store in checkpoints.
    fn aux_tensors(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    /// Restore from the auxiliary tensors of a checkpoint.
    fn restore(&mut self, _model: &Model, _aux: &BTreeMap<String, Tensor>) -> Result<()> {
        Ok(())
    }
}

struct NoHook;
impl StepHook for NoHook {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs_completed: u64,
    pub steps: u64,
    pub final_val_top1: Option<f64>,
    pub best_val_top1: Option<f64>,
    pub resumed_from_epoch: Option<u64>,
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillOutcome {
    pub train: TrainOutcome,
    pub teacher_hash_before: Option<String>,
    pub teacher_hash_after: Option<String>,
}

struct StepLoss {
    loss: Tensor,
    teacher_absmax: f64,
    student_absmax: f64,
}

struct LoopSpec<'a> {
    role: &'a str,
    cfg: &'a TrainConfig,
    data_len: usize,
    eval: Option<&'a LabeledData>,
    run: &'a RunDir,
}

fn absmax(t: &Tensor) -> f64 {
    if t.numel() == 0 {
        0.0
    } else {
        t.detach().abs().max().double_value(&[])
    }
}

fn checkpoint_meta(role: &str, epoch: u64, step: u64, val: Option<f64>, best: Option<f64>, seed: u64) -> CheckpointMeta {
    CheckpointMeta {
        role: role.to_string(),
        epoch,
        step,
        val_top1: val,
        seed,
        extra: serde_json::json!({ "best_val_top1": best }),
    }
}

fn run_loop(
    student: &dyn Student,
    spec: LoopSpec<'_>,
    hook: &mut dyn StepHook,
    step_fn: &mut dyn FnMut(&[usize], &mut ChaCha8Rng) -> Result<StepLoss>,
) -> Result<TrainOutcome> {
    let LoopSpec { role, cfg, data_len: n, eval, run } = spec;
    let model = student.model();
    let params: Vec<(String, Tensor)> = model.params().iter().map(|(k, t)| (k.clone(), t.shallow_clone())).collect();
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &params)?;
    let mut start_epoch = 0u64;
    let mut best: Option<f64> = None;
    let mut resumed_from = None;
    let mut wall_offset = 0.0;

    if cfg.resume && run.last_checkpoint().exists() {
        let ck = load_checkpoint(&run.last_checkpoint())?;
        if ck.model.spec() != model.spec() {
            return Err(Error::precondition(format!(
                "run directory holds a {} checkpoint, cannot resume a {}",
                ck.model.spec().name(),
                model.spec().name()
            )));
        }
        for (name, t) in ck.model.state() {
            model.set_tensor(&name, &t)?;
        }
        opt.load_state(&ck.aux)?;
        hook.restore(model, &ck.aux)?;
        start_epoch = ck.meta.epoch;
        best = ck.meta.extra.get("best_val_top1").and_then(|v| v.as_f64());
        resumed_from = Some(start_epoch);
        run.truncate_after(start_epoch)?;
        wall_offset = run.read_epochs()?.last().map_or(0.0, |r| r.wall_seconds);
        tracing::info!(epoch = start_epoch, "resuming");
    } else {
        run.truncate_after(0)?;
    }

    if n == 0 {
        return Err(Error::precondition("training data is empty"));
    }
    let bs = cfg.batch_size.min(n);
    let steps_per_epoch = cfg.steps_per_epoch.unwrap_or((n / bs).max(1) as u64);
    let started = Instant::now();
    let mut last_val = None;

    let save = |opt: &Optimizer, hook: &dyn StepHook, epoch: u64, val: Option<f64>, best: Option<f64>| -> Result<()> {
        let meta = checkpoint_meta(role, epoch, opt.steps(), val, best, cfg.seed);
        let mut aux = opt.state_tensors();
        aux.extend(hook.aux_tensors());
        save_checkpoint(&run.last_checkpoint(), model, &meta, &aux)
    };

    for epoch in start_epoch..cfg.epochs {
        let mut order_rng = named_stream(cfg.seed, "order", epoch);
        let mut order: VecDeque<usize> = VecDeque::new();
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            if order.len() < bs {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut order_rng);
                order.extend(p);
            }
            let idx: Vec<usize> = order.drain(..bs).collect();
            let mut rng = named_stream(cfg.seed, "step", opt.steps());
            hook.before_forward(model)?;
            let out = step_fn(&idx, &mut rng)?;
            let value = out.loss.double_value(&[]);
            if !value.is_finite() {
                run.append_json(&DivergenceRecord {
                    event: "diverged".into(),
                    epoch: epoch + 1,
                    step: opt.steps(),
                    loss: value,
                    lr: opt.current_lr(),
                    teacher_logit_absmax: out.teacher_absmax,
                    student_logit_absmax: out.student_absmax,
                })?;
                return Err(Error::Diverged(format!(
                    "loss became {value} at epoch {} step {}; see {}",
                    epoch + 1,
                    opt.steps(),
                    run.metrics().display()
                )));
            }
            opt.zero_grad(&params);
            out.loss.backward();
            hook.before_update(model)?;
            opt.step(&params)?;
            hook.after_update(model)?;
            loss_sum += value;
        }

        hook.before_eval(model)?;
        let ev = eval.map(|d| evaluate(student, d, cfg.eval_batch_size)).transpose()?;
        let val = ev.as_ref().map(|e| e.top1);
        last_val = val;
        let improved = match (val, best) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            best = val.or(best);
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_top1: val,
            lr: opt.config().lr_at(opt.steps().saturating_sub(1)),
            wall_seconds: wall_offset + started.elapsed().as_secs_f64(),
            step: opt.steps(),
            per_class_top1: if cfg.per_class_eval { ev.map(|e| e.per_class_top1) } else { None },
        };
        tracing::info!(epoch = rec.epoch, loss = rec.train_loss, val = ?rec.val_top1, "epoch done");
        save(&opt, hook, epoch + 1, val, best)?;
        if improved {
            std::fs::copy(run.last_checkpoint(), run.best_checkpoint())?;
        }
        run.append_json(&rec)?;
        hook.after_eval(model)?;
    }

    if !run.last_checkpoint().exists() {
        // Zero-epoch run: the checkpoint is the initialization.
        hook.before_eval(model)?;
        let val = eval.map(|d| evaluate(student, d, cfg.eval_batch_size)).transpose()?.map(|e| e.top1);
        last_val = val;
        best = val;
        save(&opt, hook, 0, val, val)?;
        std::fs::copy(run.last_checkpoint(), run.best_checkpoint())?;
        hook.after_eval(model)?;
    }

    let records = run.read_epochs()?;
    Ok(TrainOutcome {
        epochs_completed: cfg.epochs.max(start_epoch),
        steps: opt.steps(),
        final_val_top1: last_val.or_else(|| records.last().and_then(|r| r.val_top1)),
        best_val_top1: best,
        resumed_from_epoch: resumed_from,
        records,
    })
}

/// Distill `teacher` into `student` on unlabeled `train` inputs.
///
/// Each step builds one (augmented, mixed) batch that is fed to both models;
/// only the student is updated. The teacher always runs in inference mode
/// without gradient tracking.
pub fn distill(
    teacher: &dyn Classifier,
    student: &dyn Student,
    train: &dyn InputSource,
    eval: Option<&LabeledData>,
    cfg: &DistillConfig,
    run: &RunDir,
    hook: Option<&mut dyn StepHook>,
) -> Result<DistillOutcome> {
    cfg.validate()?;
    let c = teacher.num_classes();
    if student.num_classes() != c {
        return Err(Error::precondition(format!(
            "student head has {} outputs, teacher has {c}",
            student.num_classes()
        )));
    }
    let before = teacher.fingerprint();
    let mut no_hook = NoHook;
    let hook: &mut dyn StepHook = match hook {
        Some(h) => h,
        None => &mut no_hook,
    };
    let tau = cfg.temperature;
    let mut step = |idx: &[usize], rng: &mut ChaCha8Rng| -> Result<StepLoss> {
        let x = train.batch(idx, if cfg.train.standard_aug { Some(&mut *rng) } else { None })?;
        let mixed = apply_mix(&x, cfg.mix, cfg.cutmix_alpha, cfg.cutmix_beta, rng)?;
        let t = tch::no_grad(|| teacher.logits(&mixed.inputs, false));
        let s = student.logits(&mixed.inputs, true);
        let want = vec![idx.len() as i64, c as i64];
        if t.size() != want || s.size() != want {
            return Err(Error::precondition(format!(
                "logit shapes teacher {:?} / student {:?}, expected {want:?}",
                t.size(),
                s.size()
            )));
        }
        let loss = match cfg.loss {
            LossKind::Kl => {
                let target = degrade_batch(&soften_batch(&t, tau), cfg.signal, cfg.topk_renorm)?;
                kd_loss_batch(&target, &s, tau)
            }
            kind => regression_loss_batch(&t, &s, tau, kind),
        };
        let loss = match student.model().regularization() {
            Some(r) => loss + r,
            None => loss,
        };
        Ok(StepLoss { teacher_absmax: absmax(&t), student_absmax: absmax(&s), loss })
    };
    let spec = LoopSpec { role: "student", cfg: &cfg.train, data_len: train.len(), eval, run };
    let outcome = run_loop(student, spec, hook, &mut step)?;
    let after = teacher.fingerprint();
    if before != after {
        return Err(Error::Diverged(format!(
            "teacher state changed during distillation ({before:?} -> {after:?})"
        )));
    }
    Ok(DistillOutcome { train: outcome, teacher_hash_before: before, teacher_hash_after: after })
}

/// Supervised (cross-entropy) training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    /// Side of the square cutout erased from each image; 0 disables it.
    #[serde(default)]
    pub cutout: usize,
    pub train: TrainConfig,
}

impl SupervisedConfig {
    /// Teacher presets. The `paper` budget is 100 epochs of 2000 steps at batch 128
    /// with step-decayed SGD; pilot budget compresses the same schedule
    /// into 30 one-pass epochs.
    pub fn preset(family: Family, budget: Budget, train_len: usize) -> Self {
        let batch = 128;
        let (epochs, spe) = match budget {
            Budget::Paper => (100u64, 2000u64),
            Budget::Pilot => (30, (train_len / batch).max(1) as u64),
        };
        let scale = (epochs * spe) as f64 / 200_000.0;
        let scaled = |b: &[u64]| -> Vec<u64> {
            let mut out: Vec<u64> = Vec::new();
            for &x in b {
                let v = ((x as f64 * scale).round() as u64).max(out.last().map_or(1, |l| l + 1));
                out.push(v);
            }
            out
        };
        let (optimizer, cutout) = match family {
            Family::Wideresnet => (
                OptimizerConfig::sgd(
                    0.1,
                    0.9,
                    true,
                    5e-4,
                    Schedule::Piecewise {
                        boundaries: scaled(&[24_000, 48_000, 64_000, 80_000]),
                        values: vec![0.1, 0.02, 0.004, 0.0008],
                    },
                ),
                16,
            ),
            Family::CifarResnet | Family::Vgg => (
                OptimizerConfig::sgd(
                    0.1,
                    0.9,
                    false,
                    5e-4,
                    Schedule::Piecewise {
                        boundaries: scaled(&[400, 32_000, 48_000, 64_000]),
                        values: vec![0.01, 0.1, 0.01, 0.001],
                    },
                ),
                16,
            ),
            Family::AudioCnn => (OptimizerConfig::adam(1e-3), 0),
        };
        Self {
            cutout,
            train: TrainConfig {
                epochs,
                batch_size: batch,
                steps_per_epoch: Some(spe),
                seed: 0,
                optimizer,
                standard_aug: true,
                eval_batch_size: 500,
                per_class_eval: false,
                resume: true,
            },
        }
    }
}

/// Zero a random `size x size` square (clamped at the borders) per sample.
pub fn cutout<R: Rng>(x: &Tensor, size: usize, rng: &mut R) -> Tensor {
    let s = x.size();
    if size == 0 || s.len() != 4 {
        return x.shallow_clone();
    }
    let (n, h, w) = (s[0] as usize, s[2] as usize, s[3] as usize);
    let mut keep = vec![1f32; n * h * w];
    for i in 0..n {
        let cy = rng.random_range(0..h) as isize;
        let cx = rng.random_range(0..w) as isize;
        let half = (size / 2) as isize;
        let (y0, y1) = ((cy - half).max(0) as usize, ((cy - half + size as isize).min(h as isize)).max(0) as usize);
        let (x0, x1) = ((cx - half).max(0) as usize, ((cx - half + size as isize).min(w as isize)).max(0) as usize);
        for y in y0..y1 {
            keep[(i * h + y) * w + x0..(i * h + y) * w + x1].fill(0.0);
        }
    }
    x * Tensor::from_slice(&keep).view([n as i64, 1, h as i64, w as i64])
}

/// Cross-entropy training of `model` on labeled data.
pub fn train_supervised(
    model: &dyn Student,
    train: &LabeledData,
    eval: Option<&LabeledData>,
    cfg: &SupervisedConfig,
    run: &RunDir,
) -> Result<TrainOutcome> {
    cfg.train.validate()?;
    if model.num_classes() != train.num_classes {
        return Err(Error::precondition(format!(
            "model head has {} outputs, data has {} classes",
            model.num_classes(),
            train.num_classes
        )));
    }
    let mut step = |idx: &[usize], rng: &mut ChaCha8Rng| -> Result<StepLoss> {
        let x = train.source.batch(idx, if cfg.train.standard_aug { Some(&mut *rng) } else { None })?;
        let x = cutout(&x, cfg.cutout, rng);
        let y = train.labels_for(idx);
        let s = model.logits(&x, true);
        let loss = s.cross_entropy_for_logits(&y);
        let loss = match model.model().regularization() {
            Some(r) => loss + r,
            None => loss,
        };
        Ok(StepLoss { teacher_absmax: 0.0, student_absmax: absmax(&s), loss: loss.to_kind(Kind::Float) })
    };
    let spec = LoopSpec { role: "teacher", cfg: &cfg.train, data_len: train.len(), eval, run };
    run_loop(model, spec, &mut NoHook, &mut step)
}
