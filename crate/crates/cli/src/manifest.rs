//! Run manifests: the resolved configuration, dataset fingerprint, artifact
//! paths, and timestamps for one training run. Rerunning with the manifest's
//! configuration and dataset reproduces the results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::exit::Result;

pub struct ManifestInput<'a> {
    pub dataset_name: &'a str,
    pub dataset_dir: &'a Path,
    pub dataset_fingerprint: u64,
    pub graphs: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub max_nodes: usize,
    pub config: &'a RunConfig,
    pub artifacts: &'a [String],
}

pub fn write(path: &Path, input: &ManifestInput<'_>) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "tool=diffpool");
    let _ = writeln!(out, "tool_version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "created_unix={created}");
    let _ = writeln!(out, "dataset_name={}", input.dataset_name);
    let _ = writeln!(out, "dataset_dir={}", input.dataset_dir.display());
    let _ = writeln!(out, "dataset_fingerprint={:016x}", input.dataset_fingerprint);
    let _ = writeln!(out, "graphs={}", input.graphs);
    let _ = writeln!(out, "classes={}", input.classes);
    let _ = writeln!(out, "feature_dim={}", input.feature_dim);
    let _ = writeln!(out, "max_nodes={}", input.max_nodes);
    for (key, value) in input.config.entries() {
        let _ = writeln!(out, "{key}={value}");
    }
    for artifact in input.artifacts {
        let _ = writeln!(out, "artifact={artifact}");
    }
    fs::write(path, out)?;
    Ok(())
}
