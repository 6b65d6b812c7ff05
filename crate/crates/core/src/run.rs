//! Run directory layout and the per-epoch metrics log.
//!
//! ```text
//! RUN/
//!   manifest.json
//!   checkpoints/{last,best}.safetensors
//!   metrics.log        one JSON object per line
//!   reports/
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.log";
pub const LAST: &str = "last.safetensors";
pub const BEST: &str = "best.safetensors";

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Create (or reopen) a run directory.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("reports"))?;
        Ok(Self { root })
    }

    /// Open an existing run directory without creating anything.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("checkpoints").is_dir() {
            return Err(Error::MissingPrerequisite(format!("{} is not a run directory", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join(METRICS)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn last_checkpoint(&self) -> PathBuf {
        self.checkpoints().join(LAST)
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.checkpoints().join(BEST)
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn append_json<T: Serialize>(&self, record: &T) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.metrics())?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }

    /// Epoch records currently in the log (diagnostic events are skipped).
    pub fn read_epochs(&self) -> Result<Vec<EpochRecord>> {
        let path = self.metrics();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path)?;
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            if v.get("event").is_none() {
                out.push(serde_json::from_value(v)?);
            }
        }
        Ok(out)
    }

    /// Drop log lines that belong to epochs after `epoch` (used on resume so
    /// a restarted run does not duplicate records).
    pub fn truncate_after(&self, epoch: u64) -> Result<()> {
        let path = self.metrics();
        if !path.exists() {
            return Ok(());
        }
        let text = fs::read_to_string(&path)?;
        let mut kept = String::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            if v.get("epoch").and_then(|e| e.as_u64()).is_some_and(|e| e <= epoch) {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        let tmp = path.with_extension("log.tmp");
        fs::write(&tmp, kept)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// One line of `metrics.log` per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub train_loss: f64,
    pub val_top1: Option<f64>,
    pub lr: f64,
    pub wall_seconds: f64,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_top1: Option<Vec<f64>>,
}

/// Written instead of an epoch record when the loss stops being finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub event: String,
    pub epoch: u64,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub teacher_logit_absmax: f64,
    pub student_logit_absmax: f64,
}
