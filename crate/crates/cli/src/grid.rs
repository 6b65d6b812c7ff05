//! Ablation grids: each cell is an independent `distill` child run under
//! `RUN/children/<cell>`, sharing seeds and generated data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use onedatum::distillery::{LossKind, MixKind, SignalMode};
use onedatum::run::RunDir;
use onedatum::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::jobs::{run_distill, DistillJob};
use crate::manifest::with_manifest;

pub const SOURCE_IMAGES: [&str; 5] = ["noise", "universe", "bridge", "city", "animals"];
pub const DATASET_SIZES: [usize; 3] = [1_000, 10_000, 100_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    SourceImage,
    DatasetSize,
    Augmentation,
    Signal,
    Loss,
}

impl GridKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source-image" | "image" => Ok(Self::SourceImage),
            "dataset-size" | "size" => Ok(Self::DatasetSize),
            "augmentation" | "aug" => Ok(Self::Augmentation),
            "signal" => Ok(Self::Signal),
            "loss" => Ok(Self::Loss),
            _ => Err(Error::Config(format!(
                "unknown grid `{s}` (source-image, dataset-size, augmentation, signal, loss)"
            ))),
        }
    }

    pub fn cells(self) -> Vec<String> {
        match self {
            Self::SourceImage => SOURCE_IMAGES.iter().map(|s| s.to_string()).collect(),
            Self::DatasetSize => DATASET_SIZES.iter().map(|n| format!("n{n}")).collect(),
            Self::Augmentation => ["none", "flip-crop", "mixup", "cutmix"].map(String::from).to_vec(),
            Self::Signal => ["full", "top5", "hard"].map(String::from).to_vec(),
            Self::Loss => ["kl", "l1", "l2"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJob {
    pub grid: GridKind,
    /// Directory with one generated dataset per source image name.
    pub patches_root: PathBuf,
    /// Source image used by every grid except `source-image`.
    pub image: String,
    pub cells: Vec<String>,
    pub parallel: usize,
    /// Fully resolved child job before the cell's change is applied.
    pub base: DistillJob,
}

/// The child job for one cell.
pub fn cell_job(grid: &GridJob, cell: &str) -> Result<DistillJob> {
    let mut j = grid.base.clone();
    j.patches = grid.patches_root.join(&grid.image);
    let d = &mut j.distill;
    match grid.grid {
        GridKind::SourceImage => j.patches = grid.patches_root.join(cell),
        GridKind::DatasetSize => {
            let n: usize = cell
                .trim_start_matches('n')
                .parse()
                .map_err(|_| Error::Config(format!("dataset-size cell `{cell}` should look like n1000")))?;
            j.train_limit = Some(n);
        }
        GridKind::Augmentation => {
            let (aug, mix) = match cell {
                "none" => (false, MixKind::None),
                "flip-crop" => (true, MixKind::None),
                "mixup" => (true, MixKind::Mixup),
                "cutmix" => (true, MixKind::Cutmix),
                _ => return Err(Error::Config(format!("unknown augmentation cell `{cell}`"))),
            };
            d.train.standard_aug = aug;
            d.mix = mix;
        }
        GridKind::Signal => {
            d.signal = cell.parse::<SignalMode>()?;
            d.loss = LossKind::Kl;
        }
        GridKind::Loss => {
            d.loss = LossKind::parse(cell)?;
            d.signal = SignalMode::Full;
        }
    }
    Ok(j)
}

/// Commands that would create whatever the grid is missing.
fn missing_prerequisites(grid: &GridJob, jobs: &[(String, DistillJob)]) -> Vec<String> {
    let mut out = Vec::new();
    if !grid.base.teacher.exists() {
        out.push(format!(
            "onedatum train-teacher --dataset cifar10 --arch resnet20 --run {}",
            grid.base.teacher.parent().and_then(Path::parent).unwrap_or(Path::new("TEACHER_RUN")).display()
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (_, j) in jobs {
        if seen.insert(j.patches.clone()) && !j.patches.join(onedatum::patchforge::MANIFEST_FILE).exists() {
            let name = j.patches.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let source = if name == "noise" { "--noise".to_string() } else { format!("--image {name}.png") };
            let count = j.train_limit.map(|n| format!(" --count {n}")).unwrap_or_default();
            out.push(format!("onedatum gen-patches {source} --out {}{count}", j.patches.display()));
        }
    }
    out
}

pub fn run_grid(grid: &GridJob, run_dir: &Path) -> Result<Value> {
    let all = grid.grid.cells();
    let cells: Vec<String> = if grid.cells.is_empty() { all.clone() } else { grid.cells.clone() };
    if grid.grid != GridKind::DatasetSize {
        if let Some(bad) = cells.iter().find(|c| !all.contains(c)) {
            return Err(Error::Config(format!("grid {:?} has no cell `{bad}`; cells: {}", grid.grid, all.join(", "))));
        }
    }
    let jobs: Vec<(String, DistillJob)> = cells.iter().map(|c| Ok((c.clone(), cell_job(grid, c)?))).collect::<Result<_>>()?;
    let missing = missing_prerequisites(grid, &jobs);
    if !missing.is_empty() {
        return Err(Error::MissingPrerequisite(format!("run these first:\n  {}", missing.join("\n  "))));
    }
    let run = RunDir::create(run_dir)?;
    let seeds = BTreeMap::from([("train".to_string(), grid.base.distill.train.seed)]);
    with_manifest(&run, "grid", serde_json::to_value(grid)?, seeds, BTreeMap::new(), || {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.parallel.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<(String, Result<Value>)> = pool.install(|| {
            jobs.par_iter()
                .map(|(cell, job)| {
                    let dir = run.root().join("children").join(cell);
                    tracing::info!(cell = %cell, "grid cell");
                    (cell.clone(), run_distill(job, &dir))
                })
                .collect()
        });
        let mut summary = serde_json::Map::new();
        let mut first_err = None;
        for (cell, r) in results {
            match r {
                Ok(v) => {
                    summary.insert(cell, v);
                }
                Err(e) => {
                    summary.insert(cell, json!({ "error": e.to_string() }));
                    first_err.get_or_insert(e);
                }
            }
        }
        let rows: Vec<Vec<String>> = summary
            .iter()
            .map(|(c, v)| {
                let acc = v.get("best_val_top1").and_then(Value::as_f64).map_or("-".into(), |a| format!("{a:.4}"));
                vec![c.clone(), acc]
            })
            .collect();
        onedatum::lens::write_table(&run.reports().join("grid.tsv"), &["cell", "best_val_top1"], &rows)?;
        match first_err {
            Some(e) => Err(e),
            None => Ok(Value::Object(summary)),
        }
    })
}
