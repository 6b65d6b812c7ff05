//! `RUN/manifest.json`: what was run, with which fully resolved settings,
//! seeds and input hashes, and how it ended.

use std::collections::BTreeMap;
use std::path::Path;

use onedatum::run::RunDir;
use onedatum::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub dataset_hashes: BTreeMap<String, String>,
    pub code_version: String,
    pub started_at: String,
    #[serde(default)]
    pub resumed_at: Vec<String>,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub final_metrics: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::format("run manifest", e.to_string()))
}

impl RunManifest {
    /// Start (or resume) a run. An existing manifest must describe the same
    /// command and configuration; otherwise the directory belongs to a
    /// different run and is left untouched.
    pub fn begin(
        run: &RunDir,
        command: &str,
        config: Value,
        seeds: BTreeMap<String, u64>,
        dataset_hashes: BTreeMap<String, String>,
    ) -> Result<Self> {
        let path = run.manifest();
        let mut m = if path.exists() {
            let old = read_manifest(&path)?;
            if old.command != command || old.config != config {
                return Err(Error::Config(format!(
                    "{} already holds a `{}` run with a different configuration; choose a fresh --run directory",
                    run.root().display(),
                    old.command
                )));
            }
            let mut m = old;
            m.resumed_at.push(now());
            m
        } else {
            Self {
                command: command.to_string(),
                config,
                seeds: BTreeMap::new(),
                dataset_hashes: BTreeMap::new(),
                code_version: crate::code_version(),
                started_at: now(),
                resumed_at: Vec::new(),
                finished_at: None,
                status: RunStatus::Running,
                final_metrics: None,
            }
        };
        m.seeds = seeds;
        m.dataset_hashes = dataset_hashes;
        m.code_version = crate::code_version();
        m.status = RunStatus::Running;
        m.finished_at = None;
        m.write(run)?;
        Ok(m)
    }

    pub fn write(&self, run: &RunDir) -> Result<()> {
        onedatum::util::write_json(run.manifest(), self)
    }

    pub fn finish(&mut self, run: &RunDir, metrics: Value) -> Result<()> {
        self.status = RunStatus::Finished;
        self.finished_at = Some(now());
        self.final_metrics = Some(metrics);
        self.write(run)
    }

    pub fn fail(&mut self, run: &RunDir, err: &Error) -> Result<()> {
        self.status = RunStatus::Failed;
        self.finished_at = Some(now());
        self.final_metrics = Some(serde_json::json!({ "error": err.to_string() }));
        self.write(run)
    }
}

/// Run `body` bracketed by manifest bookkeeping.
pub fn with_manifest<F>(
    run: &RunDir,
    command: &str,
    config: Value,
    seeds: BTreeMap<String, u64>,
    hashes: BTreeMap<String, String>,
    body: F,
) -> Result<Value>
where
    F: FnOnce() -> Result<Value>,
{
    let mut m = RunManifest::begin(run, command, config, seeds, hashes)?;
    match body() {
        Ok(metrics) => {
            m.finish(run, metrics.clone())?;
            Ok(metrics)
        }
        Err(e) => {
            m.fail(run, &e)?;
            Err(e)
        }
    }
}
