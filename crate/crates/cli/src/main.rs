use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use onedatum::audioforge::ClipConfig;
use onedatum::compress::{CompressionMethod, CompressionPlan};
use onedatum::distillery::{Budget, DistillConfig};
use onedatum::patchforge::PatchConfig;
use onedatum::Result;
use onedatum_cli::analyze::{self, AnalyzeOpts};
use onedatum_cli::config::{put, resolve, set_assignment, merge};
use onedatum_cli::grid::{run_grid, GridJob, GridKind};
use onedatum_cli::jobs::{self, CompressJob, DistillJob, GenAudioJob, GenPatchesJob, ImageInput};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "onedatum", version, about = "Knowledge distillation from a single image or audio clip")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Layers {
    /// TOML file overriding preset defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key.path=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Layers {
    fn overlay(&self, mut flags: Value) -> Result<Value> {
        for s in &self.set {
            merge(&mut flags, set_assignment(s)?);
        }
        Ok(flags)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    Pilot,
    Paper,
}

impl From<BudgetArg> for Budget {
    fn from(b: BudgetArg) -> Self {
        match b {
            BudgetArg::Pilot => Budget::Pilot,
            BudgetArg::Paper => Budget::Paper,
        }
    }
}

/// Distillation knobs shared by `distill`, `compress` and `grid`.
#[derive(Args, Clone, Default)]
struct DistillFlags {
    #[arg(long)]
    temperature: Option<f64>,
    /// kl, l1 or l2.
    #[arg(long)]
    loss: Option<String>,
    /// full, topK (e.g. top5) or hard.
    #[arg(long)]
    signal: Option<String>,
    /// none, mixup or cutmix.
    #[arg(long)]
    mix: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    steps_per_epoch: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Log per-class validation accuracy (needed by `analyze perclass`).
    #[arg(long)]
    per_class_eval: bool,
    /// Ignore an existing checkpoint in the run directory.
    #[arg(long)]
    no_resume: bool,
}

impl DistillFlags {
    /// Overlay onto a `DistillConfig` tree rooted at `prefix`.
    fn overlay(&self, tree: &mut Value, prefix: &str) {
        let p = |k: &str| format!("{prefix}.{k}");
        if let Some(v) = self.temperature {
            put(tree, &p("temperature"), json!(v));
        }
        if let Some(v) = &self.loss {
            put(tree, &p("loss"), json!(v));
        }
        if let Some(v) = &self.signal {
            put(tree, &p("signal"), json!(v));
        }
        if let Some(v) = &self.mix {
            put(tree, &p("mix"), json!(v));
        }
        if let Some(v) = self.epochs {
            put(tree, &p("train.epochs"), json!(v));
        }
        if let Some(v) = self.steps_per_epoch {
            put(tree, &p("train.steps_per_epoch"), json!(v));
        }
        if let Some(v) = self.batch_size {
            put(tree, &p("train.batch_size"), json!(v));
        }
        if let Some(v) = self.lr {
            put(tree, &p("train.optimizer.lr"), json!(v));
        }
        if let Some(v) = self.seed {
            put(tree, &p("train.seed"), json!(v));
        }
        if self.per_class_eval {
            put(tree, &p("train.per_class_eval"), json!(true));
        }
        if self.no_resume {
            put(tree, &p("train.resume"), json!(false));
        }
    }
}

/// Data selection shared by the training commands.
#[derive(Args, Clone, Default)]
struct DataFlags {
    /// Teacher's labeled dataset (cifar10, cifar100, speech); inferred from
    /// the teacher's run when omitted.
    #[arg(long)]
    dataset: Option<String>,
    /// Use only the first N training inputs.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Evaluate on the first N test examples (0 disables evaluation).
    #[arg(long)]
    eval_limit: Option<usize>,
    /// Download missing CIFAR archives into the data root.
    #[arg(long)]
    download: bool,
}

impl DataFlags {
    fn overlay(&self, tree: &mut Value) {
        if let Some(d) = &self.dataset {
            put(tree, "dataset", json!(d));
        }
        if let Some(n) = self.train_limit {
            put(tree, "train_limit", json!(n));
        }
        if let Some(n) = self.eval_limit {
            put(tree, "eval_limit", json!(n));
        }
        if self.download {
            put(tree, "download", json!(true));
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an augmented patch dataset from one image.
    GenPatches {
        /// Source image file.
        #[arg(long, conflicts_with = "noise", required_unless_present = "noise")]
        image: Option<PathBuf>,
        /// Use a uniform-noise source image instead of a file.
        #[arg(long)]
        noise: bool,
        /// Side length of the noise image.
        #[arg(long, default_value_t = 1024)]
        noise_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        patch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write every patch as a PNG.
        #[arg(long)]
        png: bool,
        #[command(flatten)]
        layers: Layers,
    },
    /// Generate an augmented clip dataset from one audio file.
    GenAudio {
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seconds: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        layers: Layers,
    },
    /// Supervised teacher training with the family's preset schedule.
    TrainTeacher {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        arch: String,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "paper")]
        budget: BudgetArg,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        steps_per_epoch: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train_limit: Option<usize>,
        #[arg(long)]
        eval_limit: Option<usize>,
        #[arg(long)]
        per_class_eval: bool,
        #[arg(long)]
        download: bool,
        #[command(flatten)]
        layers: Layers,
    },
    /// Distill a frozen teacher into a fresh student on a generated dataset.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// small, large or audio.
        #[arg(long, default_value = "small")]
        preset: String,
        #[arg(long, value_enum, default_value = "pilot")]
        budget: BudgetArg,
        /// Student architecture; defaults to the teacher's.
        #[arg(long)]
        student: Option<String>,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        knobs: DistillFlags,
        #[command(flatten)]
        layers: Layers,
    },
    /// Prune or quantize a trained model, finetuning by self-distillation.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = ["prune", "quantize"])]
        method: String,
        #[arg(long, default_value_t = 0.5)]
        sparsity: f64,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long, default_value = "small")]
        preset: String,
        #[arg(long, value_enum, default_value = "pilot")]
        budget: BudgetArg,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        knobs: DistillFlags,
        #[command(flatten)]
        layers: Layers,
    },
    /// Analysis reports written to RUN/reports.
    Analyze {
        #[arg(value_enum)]
        kind: AnalyzeKind,
        #[command(flatten)]
        opts: AnalyzeFlags,
    },
    /// Run an ablation grid of distillation runs.
    Grid {
        /// source-image, dataset-size, augmentation, signal or loss.
        #[arg(long)]
        name: String,
        #[arg(long)]
        teacher: PathBuf,
        /// Directory holding one generated dataset per source image.
        #[arg(long)]
        patches_root: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "city")]
        image: String,
        /// Comma-separated subset of cells.
        #[arg(long, value_delimiter = ',')]
        cells: Vec<String>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value = "small")]
        preset: String,
        #[arg(long, value_enum, default_value = "pilot")]
        budget: BudgetArg,
        #[arg(long)]
        student: Option<String>,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        knobs: DistillFlags,
        #[command(flatten)]
        layers: Layers,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeKind {
    Confidence,
    Cka,
    Gist,
    Embed,
    Perclass,
}

#[derive(Args)]
struct AnalyzeFlags {
    #[arg(long)]
    run: PathBuf,
    /// Checkpoint to analyze; defaults to RUN/checkpoints/best.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Second model for CKA; defaults to the run's teacher.
    #[arg(long)]
    model_b: Option<PathBuf>,
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long)]
    patches: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// GIST working resolution.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    download: bool,
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn distill_job(
    teacher: PathBuf,
    patches: PathBuf,
    preset: &str,
    budget: Budget,
    student: Option<String>,
    data: &DataFlags,
    knobs: &DistillFlags,
    layers: &Layers,
) -> Result<DistillJob> {
    let base = DistillJob::preset(teacher, patches, preset, budget)?;
    let mut flags = json!({});
    if let Some(s) = student {
        put(&mut flags, "student", json!(s));
    }
    data.overlay(&mut flags);
    knobs.overlay(&mut flags, "distill");
    resolve(&base, layers.config.as_deref(), layers.overlay(flags)?)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenPatches { image, noise, noise_size, out, count, patch_size, seed, workers, png, layers } => {
            let source = match (image, noise) {
                (Some(path), false) => ImageInput::File { path },
                _ => ImageInput::Noise { height: noise_size, width: noise_size, seed: seed.unwrap_or(0) },
            };
            let base = GenPatchesJob { source, out, workers, png, patches: PatchConfig::default() };
            let mut flags = json!({});
            for (k, v) in [("count", count.map(|v| json!(v))), ("patch_size", patch_size.map(|v| json!(v))), ("global_seed", seed.map(|v| json!(v)))] {
                if let Some(v) = v {
                    put(&mut flags, &format!("patches.{k}"), v);
                }
            }
            let job = resolve(&base, layers.config.as_deref(), layers.overlay(flags)?)?;
            print(&jobs::gen_patches(&job)?);
        }
        Command::GenAudio { clip, out, count, seconds, seed, workers, layers } => {
            let base = GenAudioJob { clip, out, workers, clips: ClipConfig::default() };
            let mut flags = json!({});
            for (k, v) in [("count", count.map(|v| json!(v))), ("segment_seconds", seconds.map(|v| json!(v))), ("global_seed", seed.map(|v| json!(v)))] {
                if let Some(v) = v {
                    put(&mut flags, &format!("clips.{k}"), v);
                }
            }
            let job = resolve(&base, layers.config.as_deref(), layers.overlay(flags)?)?;
            print(&jobs::gen_audio(&job)?);
        }
        Command::TrainTeacher {
            dataset,
            arch,
            run,
            budget,
            epochs,
            steps_per_epoch,
            seed,
            train_limit,
            eval_limit,
            per_class_eval,
            download,
            layers,
        } => {
            let mut flags = json!({});
            if let Some(v) = epochs {
                put(&mut flags, "supervised.train.epochs", json!(v));
            }
            if let Some(v) = steps_per_epoch {
                put(&mut flags, "supervised.train.steps_per_epoch", json!(v));
            }
            if let Some(v) = seed {
                put(&mut flags, "supervised.train.seed", json!(v));
            }
            if per_class_eval {
                put(&mut flags, "supervised.train.per_class_eval", json!(true));
            }
            if let Some(v) = train_limit {
                put(&mut flags, "train_limit", json!(v));
            }
            if let Some(v) = eval_limit {
                put(&mut flags, "eval_limit", json!(v));
            }
            if download {
                put(&mut flags, "download", json!(true));
            }
            let (job, train) = jobs::teacher_job(&dataset, &arch, budget.into(), layers.config.as_deref(), layers.overlay(flags)?)?;
            print(&jobs::train_teacher(&job, &train, &run)?);
        }
        Command::Distill { teacher, patches, run, preset, budget, student, data, knobs, layers } => {
            let job = distill_job(teacher, patches, &preset, budget.into(), student, &data, &knobs, &layers)?;
            print(&jobs::run_distill(&job, &run)?);
        }
        Command::Compress { model, patches, run, method, sparsity, bits, preset, budget, data, knobs, layers } => {
            let method = if method == "prune" { CompressionMethod::Prune { sparsity } } else { CompressionMethod::Quantize { bits } };
            let budget: Budget = budget.into();
            let base = CompressJob {
                model,
                patches,
                dataset: None,
                preset: preset.clone(),
                budget,
                download: false,
                train_limit: None,
                eval_limit: None,
                plan: CompressionPlan { method, finetune: DistillConfig::preset(&preset, budget)? },
            };
            let mut flags = json!({});
            data.overlay(&mut flags);
            knobs.overlay(&mut flags, "plan.finetune");
            let job = resolve(&base, layers.config.as_deref(), layers.overlay(flags)?)?;
            print(&jobs::run_compress(&job, &run)?);
        }
        Command::Analyze { kind, opts } => {
            let o = AnalyzeOpts {
                run: opts.run,
                model: opts.model,
                model_b: opts.model_b,
                teacher: opts.teacher,
                patches: opts.patches,
                dataset: opts.dataset,
                limit: opts.limit,
                temperature: opts.temperature,
                bins: opts.bins,
                size: opts.size,
                seed: opts.seed,
                download: opts.download,
            };
            let v = match kind {
                AnalyzeKind::Confidence => analyze::confidence(o)?,
                AnalyzeKind::Cka => analyze::cka(o)?,
                AnalyzeKind::Gist => analyze::gist(o)?,
                AnalyzeKind::Embed => analyze::embed(o)?,
                AnalyzeKind::Perclass => analyze::perclass(o)?,
            };
            print(&v);
        }
        Command::Grid {
            name,
            teacher,
            patches_root,
            run,
            image,
            cells,
            parallel,
            preset,
            budget,
            student,
            data,
            knobs,
            layers,
        } => {
            let grid = GridKind::parse(&name)?;
            let base = distill_job(teacher, patches_root.join(&image), &preset, budget.into(), student, &data, &knobs, &layers)?;
            let job = GridJob { grid, patches_root, image, cells, parallel, base };
            print(&run_grid(&job, &run)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(cli.command);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(onedatum_cli::exit_code(&result) as u8)
}
