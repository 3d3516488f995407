//! TU dataset directory IO and content fingerprinting.

use std::fs;
use std::path::{Path, PathBuf};

use diffpool_core::graph::{parse_tu_text, write_tu_text, Dataset, TuText};

use crate::exit::{CliError, Result};

/// Dataset name inferred from the directory name.
pub fn dataset_name(dir: &Path) -> Result<String> {
    dir.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| {
            CliError::Ingestion(format!("cannot infer dataset name from {}", dir.display()))
        })
}

fn required(dir: &Path, file: String) -> Result<String> {
    let path = dir.join(&file);
    fs::read_to_string(&path)
        .map_err(|_| CliError::Ingestion(format!("missing dataset file: {}", path.display())))
}

/// Loads `<name>_A.txt`, `<name>_graph_indicator.txt`,
/// `<name>_graph_labels.txt`, and the optional `<name>_node_labels.txt` from
/// a directory named after the dataset.
pub fn load_tu_dataset(dir: &Path) -> Result<Dataset> {
    let name = dataset_name(dir)?;
    let edges = required(dir, format!("{name}_A.txt"))?;
    let indicator = required(dir, format!("{name}_graph_indicator.txt"))?;
    let labels = required(dir, format!("{name}_graph_labels.txt"))?;
    let node_labels_path = dir.join(format!("{name}_node_labels.txt"));
    let node_labels = fs::read_to_string(&node_labels_path).ok();
    let dataset = parse_tu_text(&TuText {
        name: &name,
        edges: &edges,
        graph_indicator: &indicator,
        graph_labels: &labels,
        node_labels: node_labels.as_deref(),
    })?;
    Ok(dataset)
}

/// Loads a dataset and appends the degree and clustering-coefficient
/// feature columns — the form every model-facing command consumes.
pub fn load_augmented(dir: &Path) -> Result<Dataset> {
    let mut dataset = load_tu_dataset(dir)?;
    dataset.augment_features_all()?;
    Ok(dataset)
}

/// Writes a dataset to TU files in `dir`, named after the directory.
pub fn write_tu_dataset(dir: &Path, dataset: &Dataset) -> Result<Vec<PathBuf>> {
    let name = dataset_name(dir)?;
    fs::create_dir_all(dir)?;
    let files = write_tu_text(dataset);
    let mut written = Vec::new();
    let mut emit = |suffix: &str, contents: &str| -> Result<()> {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    emit("A", &files.edges)?;
    emit("graph_indicator", &files.graph_indicator)?;
    emit("graph_labels", &files.graph_labels)?;
    if let Some(node_labels) = &files.node_labels {
        emit("node_labels", node_labels)?;
    }
    Ok(written)
}

/// FNV-1a 64-bit content hash over the dataset files, for manifests.
pub fn fingerprint(dir: &Path) -> Result<u64> {
    let name = dataset_name(dir)?;
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for suffix in ["A", "graph_indicator", "graph_labels", "node_labels"] {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        if let Ok(bytes) = fs::read(&path) {
            feed(suffix.as_bytes());
            feed(&bytes);
        }
    }
    Ok(hash)
}
