//! `eval`: load a checkpoint and report accuracy and mean loss over a
//! dataset.

use std::path::PathBuf;

use diffpool_core::model::total_loss;
use diffpool_core::tensor::Mode;

use crate::args::Args;
use crate::checkpoint;
use crate::dataset_io;
use crate::exit::{CliError, Result};

pub fn run(args: &Args) -> Result<()> {
    let ckpt_path = PathBuf::from(args.require("checkpoint").map_err(CliError::BadConfig)?);
    let dataset_dir = PathBuf::from(args.require("dataset").map_err(CliError::BadConfig)?);

    let mut model = checkpoint::load(&ckpt_path)?;
    let dataset = dataset_io::load_augmented(&dataset_dir)?;
    if dataset.feature_dim != model.feature_dim {
        return Err(CliError::BadConfig(format!(
            "checkpoint expects feature width {}, dataset has {}",
            model.feature_dim, dataset.feature_dim
        )));
    }

    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for graph in &dataset.graphs {
        let result = model.forward(graph, Mode::BatchStats).map_err(CliError::from)?;
        let row = result.logits.row(0);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == graph.label() {
            correct += 1;
        }
        loss_sum += total_loss(&result, (1.0, 1.0));
    }
    println!("dataset={}", dataset.name);
    println!("graphs={}", dataset.len());
    println!("accuracy={:.6}", correct as f64 / dataset.len() as f64);
    println!("mean_loss={:.6}", loss_sum / dataset.len() as f64);
    Ok(())
}
