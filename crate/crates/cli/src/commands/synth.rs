//! `synth`: generate a synthetic TU-format dataset.

use std::path::PathBuf;

use diffpool_core::graph::Graph;
use diffpool_core::synth;

use crate::args::Args;
use crate::dataset_io;
use crate::exit::{CliError, Result};

pub fn run(args: &Args) -> Result<()> {
    let kind = args.get("kind").unwrap_or("planted-hierarchy");
    if kind != "planted-hierarchy" {
        return Err(CliError::BadConfig(format!(
            "unknown synthetic dataset kind {kind:?}"
        )));
    }
    let out_dir = PathBuf::from(args.require("out").map_err(CliError::BadConfig)?);
    let num_graphs: usize = match args.get("num_graphs") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad graph count {s:?}")))?,
        None => 200,
    };
    let seed: u64 = match args.get("seed") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad seed {s:?}")))?,
        None => 0,
    };

    let mut dataset = synth::planted_hierarchy(num_graphs, seed).map_err(CliError::from)?;
    // TU directories are named after the dataset.
    dataset.name = dataset_io::dataset_name(&out_dir)?;
    dataset_io::write_tu_dataset(&out_dir, &dataset)?;

    let mean_edges = |label: usize| -> f64 {
        let graphs: Vec<&Graph> = dataset.graphs.iter().filter(|g| g.label() == label).collect();
        graphs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / graphs.len() as f64
    };
    println!("dataset={}", dataset.name);
    println!("graphs={}", dataset.len());
    println!("classes={}", dataset.num_classes);
    println!("nodes_per_graph={}", synth::NODES_PER_GRAPH);
    println!("seed={seed}");
    println!("class_0_mean_edges={:.3}", mean_edges(0));
    println!("class_1_mean_edges={:.3}", mean_edges(1));
    println!("out={}", out_dir.display());
    Ok(())
}
