//! `export-assignments`: run a checkpointed model over selected graphs and
//! write per-level cluster assignments as JSON or DOT.

use std::fs;
use std::path::{Path, PathBuf};

use diffpool_core::tensor::Mode;

use crate::args::Args;
use crate::checkpoint;
use crate::dataset_io;
use crate::exit::{CliError, Result};
use crate::export::{self, AssignmentExport};

pub fn run(args: &Args) -> Result<()> {
    let ckpt_path = PathBuf::from(args.require("checkpoint").map_err(CliError::BadConfig)?);
    let dataset_dir = PathBuf::from(args.require("dataset").map_err(CliError::BadConfig)?);
    let out_path = PathBuf::from(args.require("out").map_err(CliError::BadConfig)?);
    let format = args.get("format").unwrap_or("json");
    let include_soft = args.has_flag("soft");

    let indices = parse_indices(args.require("graphs").map_err(CliError::BadConfig)?)?;
    let mut model = checkpoint::load(&ckpt_path)?;
    let dataset = dataset_io::load_augmented(&dataset_dir)?;
    if dataset.feature_dim != model.feature_dim {
        return Err(CliError::BadConfig(format!(
            "checkpoint expects feature width {}, dataset has {}",
            model.feature_dim, dataset.feature_dim
        )));
    }
    for &i in &indices {
        if i >= dataset.len() {
            return Err(CliError::IndexOutOfRange(format!(
                "graph index {i} out of range (dataset has {} graphs)",
                dataset.len()
            )));
        }
    }

    let mut records = Vec::with_capacity(indices.len());
    for &i in &indices {
        let graph = &dataset.graphs[i];
        let result = model.forward(graph, Mode::BatchStats).map_err(CliError::from)?;
        records.push(export::graph_assignments(i, graph, &result, include_soft));
    }

    match format {
        "json" => {
            let export = AssignmentExport { graphs: records };
            let text = serde_json::to_string_pretty(&export)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            fs::write(&out_path, text)?;
            println!("written={}", out_path.display());
        }
        "dot" => {
            for record in &records {
                let graph = &dataset.graphs[record.graph_index];
                let dot = export::to_dot(graph, record);
                let path = dot_path(&out_path, record.graph_index, records.len() > 1);
                fs::write(&path, dot)?;
                println!("written={}", path.display());
            }
        }
        other => {
            return Err(CliError::BadConfig(format!(
                "unknown export format {other:?} (expected json or dot)"
            )))
        }
    }
    Ok(())
}

fn parse_indices(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| CliError::BadConfig(format!("bad graph index {tok:?}")))
        })
        .collect()
}

/// Single graph: the path as given. Several graphs: insert the index before
/// the extension.
fn dot_path(base: &Path, index: usize, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("graph");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("dot");
    base.with_file_name(format!("{stem}_{index}.{ext}"))
}
