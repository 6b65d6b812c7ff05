//! The individual commands as resolved, serializable jobs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use onedatum::audioforge::{generate_clip_dataset, ClipConfig, SourceClip};
use onedatum::compress::{compress_with_self_distillation, CompressionPlan};
use onedatum::data::cifar::Split;
use onedatum::distillery::{distill, evaluate, train_supervised, Budget, DistillConfig, SupervisedConfig};
use onedatum::modelzoo::{build_model, load_checkpoint, save_checkpoint, CheckpointMeta, ModelSpec};
use onedatum::patchforge::{generate_dataset, make_noise_image, GenerateOptions, LoadOptions, PatchConfig, SourceImage};
use onedatum::run::RunDir;
use onedatum::seed::derive_named;
use onedatum::util::sha256_file;
use onedatum::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::datasets::{domain_fingerprint, load_labeled, Domain, Generated};
use crate::manifest::{read_manifest, with_manifest};

/// Where a patch dataset's source image comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ImageInput {
    File { path: PathBuf },
    Noise { height: usize, width: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPatchesJob {
    pub source: ImageInput,
    pub out: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub png: bool,
    pub patches: PatchConfig,
}

pub fn gen_patches(job: &GenPatchesJob) -> Result<Value> {
    let src = match &job.source {
        ImageInput::File { path } => SourceImage::load(path, LoadOptions::default())?,
        ImageInput::Noise { height, width, seed } => make_noise_image(*height, *width, *seed)?,
    };
    let ds = generate_dataset(&src, &job.patches, &job.out, &GenerateOptions { workers: job.workers, png: job.png })?;
    Ok(json!({ "count": ds.len(), "data_sha256": ds.manifest.data_sha256, "source_hash": ds.manifest.source.content_hash }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenAudioJob {
    pub clip: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    pub clips: ClipConfig,
}

pub fn gen_audio(job: &GenAudioJob) -> Result<Value> {
    let src = SourceClip::load_wav(&job.clip)?;
    let ds = generate_clip_dataset(&src, &job.clips, &job.out, job.workers)?;
    Ok(json!({ "count": ds.len(), "data_sha256": ds.manifest.data_sha256, "source_hash": ds.manifest.source.content_hash }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherJob {
    pub dataset: String,
    pub arch: String,
    pub budget: Budget,
    #[serde(default)]
    pub download: bool,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub eval_limit: Option<usize>,
    pub supervised: SupervisedConfig,
}

/// Build the teacher job from flags and file; the schedule preset depends
/// on the training-set size, so the data is loaded first.
pub fn teacher_job(dataset: &str, arch: &str, budget: Budget, file: Option<&Path>, flags: Value) -> Result<(TeacherJob, onedatum::data::LabeledData)> {
    let domain = Domain::parse(dataset)?;
    let probe: Value = {
        let mut v = json!({});
        if let Some(f) = file {
            crate::config::merge(&mut v, crate::config::read_toml(f)?);
        }
        crate::config::merge(&mut v, flags.clone());
        v
    };
    let download = probe.get("download").and_then(Value::as_bool).unwrap_or(false);
    let train_limit = probe.get("train_limit").and_then(Value::as_u64).map(|v| v as usize);
    let train = load_labeled(&crate::data_root(), domain, Split::Train, train_limit, download)?;
    let spec = ModelSpec::preset(arch, train.num_classes)?;
    let preset = TeacherJob {
        dataset: domain.name().into(),
        arch: arch.into(),
        budget,
        download,
        train_limit,
        eval_limit: None,
        supervised: SupervisedConfig::preset(spec.family, budget, train.len()),
    };
    Ok((crate::config::resolve(&preset, file, flags)?, train))
}

pub fn train_teacher(job: &TeacherJob, train: &onedatum::data::LabeledData, run_dir: &Path) -> Result<Value> {
    let run = RunDir::create(run_dir)?;
    let domain = Domain::parse(&job.dataset)?;
    let mut spec = ModelSpec::preset(&job.arch, train.num_classes)?;
    spec = spec.with_input(train.source.input_shape());
    let seed = job.supervised.train.seed;
    let init_seed = derive_named(seed, "init", 0);
    let seeds = BTreeMap::from([("train".to_string(), seed), ("init".to_string(), init_seed)]);
    let config = serde_json::to_value(job)?;
    let hashes = BTreeMap::from([(domain.name().to_string(), domain_fingerprint(&crate::data_root(), domain)?)]);
    with_manifest(&run, "train-teacher", config, seeds, hashes, || {
        let model = build_model(&spec, init_seed)?;
        let eval = if job.eval_limit == Some(0) {
            None
        } else {
            Some(load_labeled(&crate::data_root(), domain, Split::Test, job.eval_limit, job.download)?)
        };
        let out = train_supervised(&model, train, eval.as_ref(), &job.supervised, &run)?;
        Ok(json!({
            "epochs": out.epochs_completed,
            "steps": out.steps,
            "final_val_top1": out.final_val_top1,
            "best_val_top1": out.best_val_top1,
        }))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillJob {
    pub teacher: PathBuf,
    pub patches: PathBuf,
    /// Teacher's labeled domain; inferred from the teacher's run manifest
    /// when absent.
    #[serde(default)]
    pub dataset: Option<String>,
    /// Student architecture; defaults to the teacher's.
    #[serde(default)]
    pub student: Option<String>,
    pub preset: String,
    pub budget: Budget,
    #[serde(default)]
    pub download: bool,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub eval_limit: Option<usize>,
    pub distill: DistillConfig,
}

impl DistillJob {
    pub fn preset(teacher: PathBuf, patches: PathBuf, preset: &str, budget: Budget) -> Result<Self> {
        Ok(Self {
            teacher,
            patches,
            dataset: None,
            student: None,
            preset: preset.into(),
            budget,
            download: false,
            train_limit: None,
            eval_limit: None,
            distill: DistillConfig::preset(preset, budget)?,
        })
    }
}

/// Dataset a checkpoint was trained on, from an explicit name or the
/// manifest of the run that produced it.
pub fn infer_domain(explicit: Option<&str>, checkpoint: &Path) -> Result<Domain> {
    if let Some(d) = explicit {
        return Domain::parse(d);
    }
    let manifest = checkpoint.parent().and_then(Path::parent).map(|r| r.join("manifest.json"));
    if let Some(m) = manifest.filter(|m| m.exists()) {
        let m = read_manifest(&m)?;
        if let Some(d) = m.config.get("dataset").and_then(Value::as_str) {
            return Domain::parse(d);
        }
        if let Some(t) = m.config.get("teacher").and_then(Value::as_str) {
            return infer_domain(None, Path::new(t));
        }
        if let Some(t) = m.config.get("model").and_then(Value::as_str) {
            return infer_domain(None, Path::new(t));
        }
    }
    Err(Error::Config(format!(
        "cannot tell which dataset {} was trained on; pass --dataset",
        checkpoint.display()
    )))
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPrerequisite(format!("{} not found; {hint}", path.display())))
    }
}

fn teacher_hint() -> &'static str {
    "train one with `onedatum train-teacher --dataset cifar10 --arch resnet20 --run RUN`"
}

pub fn run_distill(job: &DistillJob, run_dir: &Path) -> Result<Value> {
    job.distill.validate()?;
    require_file(&job.teacher, teacher_hint())?;
    let domain = infer_domain(job.dataset.as_deref(), &job.teacher)?;
    let generated = Generated::open(&job.patches)?;
    let run = RunDir::create(run_dir)?;
    let mut config = serde_json::to_value(job)?;
    config["dataset"] = json!(domain.name());
    let seed = job.distill.train.seed;
    let init_seed = derive_named(seed, "student-init", 0);
    let seeds = BTreeMap::from([
        ("train".to_string(), seed),
        ("student_init".to_string(), init_seed),
        ("dataset_generation".to_string(), generated.seed()),
    ]);
    let hashes = BTreeMap::from([
        ("teacher".to_string(), sha256_file(&job.teacher)?),
        ("patches".to_string(), generated.data_hash()),
        ("source".to_string(), generated.source_hash()),
    ]);
    with_manifest(&run, "distill", config, seeds, hashes, || {
        let mut teacher = load_checkpoint(&job.teacher)?.model;
        teacher.freeze();
        let classes = teacher.num_classes();
        let spec = match &job.student {
            Some(arch) => ModelSpec::preset(arch, classes)?.with_input(teacher.spec().input),
            None => teacher.spec().clone(),
        };
        let student = build_model(&spec, init_seed)?;
        let src = generated.source(domain, job.train_limit)?;
        let eval = if job.eval_limit == Some(0) {
            None
        } else {
            Some(load_labeled(&crate::data_root(), domain, Split::Test, job.eval_limit, job.download)?)
        };
        let out = distill(&teacher, &student, src.as_ref(), eval.as_ref(), &job.distill, &run, None)?;
        Ok(json!({
            "epochs": out.train.epochs_completed,
            "steps": out.train.steps,
            "final_val_top1": out.train.final_val_top1,
            "best_val_top1": out.train.best_val_top1,
            "teacher_hash_before": out.teacher_hash_before,
            "teacher_hash_after": out.teacher_hash_after,
            "student": spec.name(),
        }))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressJob {
    pub model: PathBuf,
    pub patches: PathBuf,
    #[serde(default)]
    pub dataset: Option<String>,
    pub preset: String,
    pub budget: Budget,
    #[serde(default)]
    pub download: bool,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub eval_limit: Option<usize>,
    pub plan: CompressionPlan,
}

/// Checkpoint file holding the final compressed weights.
pub const COMPRESSED_FILE: &str = "compressed.safetensors";

pub fn run_compress(job: &CompressJob, run_dir: &Path) -> Result<Value> {
    job.plan.validate()?;
    require_file(&job.model, teacher_hint())?;
    let domain = infer_domain(job.dataset.as_deref(), &job.model)?;
    let generated = Generated::open(&job.patches)?;
    let run = RunDir::create(run_dir)?;
    let mut config = serde_json::to_value(job)?;
    config["dataset"] = json!(domain.name());
    let seed = job.plan.finetune.train.seed;
    let seeds = BTreeMap::from([("train".to_string(), seed), ("dataset_generation".to_string(), generated.seed())]);
    let hashes = BTreeMap::from([
        ("model".to_string(), sha256_file(&job.model)?),
        ("patches".to_string(), generated.data_hash()),
    ]);
    with_manifest(&run, "compress", config, seeds, hashes, || {
        let pretrained = load_checkpoint(&job.model)?.model;
        let src = generated.source(domain, job.train_limit)?;
        let eval = if job.eval_limit == Some(0) {
            None
        } else {
            Some(load_labeled(&crate::data_root(), domain, Split::Test, job.eval_limit, job.download)?)
        };
        let bs = job.plan.finetune.train.eval_batch_size;
        let before = match &eval {
            Some(e) => Some(evaluate(&pretrained, e, bs)?.top1),
            None => None,
        };
        let out = compress_with_self_distillation(&pretrained, &job.plan, src.as_ref(), eval.as_ref(), &run)?;
        let after = match &eval {
            Some(e) => Some(evaluate(&out.student, e, bs)?.top1),
            None => None,
        };
        let meta = CheckpointMeta { role: "compressed".into(), epoch: 0, step: 0, val_top1: after, seed, extra: json!({}) };
        save_checkpoint(&run.checkpoints().join(COMPRESSED_FILE), &out.student, &meta, &[])?;
        let pruned: usize = out.sparsity.iter().map(|s| s.2).sum();
        let total: usize = out.sparsity.iter().map(|s| s.1).sum();
        let rows: Vec<Vec<String>> = out
            .sparsity
            .iter()
            .map(|(n, t, p)| vec![n.clone(), t.to_string(), p.to_string(), format!("{:.6}", *p as f64 / (*t).max(1) as f64)])
            .collect();
        if !rows.is_empty() {
            onedatum::lens::write_table(&run.reports().join("sparsity.tsv"), &["tensor", "total", "pruned", "fraction"], &rows)?;
        }
        if let Some(q) = &out.quant {
            let rows: Vec<Vec<String>> = q.scales.iter().map(|(n, s)| vec![n.clone(), format!("{s:e}")]).collect();
            onedatum::lens::write_table(&run.reports().join("quant_scales.tsv"), &["tensor", "scale"], &rows)?;
        }
        Ok(json!({
            "val_top1_before": before,
            "val_top1_after": after,
            "pruned_fraction": if total > 0 { Some(pruned as f64 / total as f64) } else { None },
            "finetune_epochs": out.distill.as_ref().map(|d| d.train.epochs_completed),
        }))
    })
}
