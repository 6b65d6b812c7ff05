//! Orchestration for the `onedatum` command: layered configuration, run
//! manifests, dataset wiring, the individual commands and ablation grids.

pub mod analyze;
pub mod config;
pub mod datasets;
pub mod grid;
pub mod jobs;
pub mod manifest;

use std::path::PathBuf;

/// Environment variable naming the dataset cache root.
pub const DATA_ENV: &str = "ONEDATUM_DATA";

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

pub fn code_version() -> String {
    let rev = env!("ONEDATUM_GIT_REV");
    if rev.is_empty() {
        env!("CARGO_PKG_VERSION").to_string()
    } else {
        format!("{}+{rev}", env!("CARGO_PKG_VERSION"))
    }
}

/// Process exit code for a command result: 0 success, 1 configuration or
/// input error, 2 runtime failure.
pub fn exit_code(r: &onedatum::Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_user_error() => 1,
        Err(_) => 2,
    }
}
