//! `train`: stratified cross-validation with per-fold metrics logs,
//! checkpoints, a summary file, and a run manifest.
//!
//! Folds fan out across worker threads; each fold's artifacts are written by
//! its own worker, and the summary is merged in fold order afterwards, so
//! results are independent of scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use diffpool_core::graph::{stratified_kfold, Dataset, FoldSplit};
use diffpool_core::model::ModelConfig;
use diffpool_core::train::{build_and_train_fold, summarize, FoldResult, TrainConfig};

use crate::args::Args;
use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::dataset_io;
use crate::exit::{CliError, Result};
use crate::manifest::{self, ManifestInput};
use crate::metrics::MetricsWriter;

pub fn run(args: &Args) -> Result<()> {
    let dataset_dir = PathBuf::from(args.require("dataset").map_err(CliError::BadConfig)?);
    let out_dir = PathBuf::from(args.require("out").map_err(CliError::BadConfig)?);
    let run_config = config::resolve(args)?;

    let dataset = dataset_io::load_augmented(&dataset_dir)?;
    let model_config = run_config.model_config(dataset.num_classes, dataset.max_nodes());
    fs::create_dir_all(&out_dir)?;

    let splits = stratified_kfold(&dataset, run_config.train.folds, run_config.train.seed)?;
    let results = run_folds(
        &dataset,
        &model_config,
        &run_config.train,
        &splits,
        &out_dir,
        run_config.effective_workers(),
    )?;

    let summary = write_summary(&out_dir, &dataset, &run_config, &results)?;
    let artifacts: Vec<String> = (0..splits.len())
        .flat_map(|f| {
            [
                format!("metrics_fold_{f}.log"),
                format!("fold_{f}.ckpt"),
            ]
        })
        .chain(["summary.txt".to_string()])
        .collect();
    manifest::write(
        &out_dir.join("manifest.txt"),
        &ManifestInput {
            dataset_name: &dataset.name,
            dataset_dir: &dataset_dir,
            dataset_fingerprint: dataset_io::fingerprint(&dataset_dir)?,
            graphs: dataset.len(),
            classes: dataset.num_classes,
            feature_dim: dataset.feature_dim,
            max_nodes: dataset.max_nodes(),
            config: &run_config,
            artifacts: &artifacts,
        },
    )?;

    // stdout carries the machine-readable summary.
    print!("{summary}");
    Ok(())
}

/// Trains every fold, fanning out over `workers` threads. Artifact writes
/// are fold-local; results merge in fold order.
fn run_folds(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    splits: &[FoldSplit],
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<FoldResult>> {
    let queue: Mutex<Vec<usize>> = Mutex::new((0..splits.len()).rev().collect());
    let outcomes: Mutex<Vec<Option<Result<FoldResult>>>> =
        Mutex::new((0..splits.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(splits.len()) {
            scope.spawn(|| loop {
                let Some(fold) = queue.lock().expect("queue lock").pop() else {
                    return;
                };
                let outcome = train_one_fold(
                    dataset,
                    model_config,
                    train_config,
                    &splits[fold],
                    fold,
                    out_dir,
                );
                outcomes.lock().expect("outcomes lock")[fold] = Some(outcome);
            });
        }
    });

    outcomes
        .into_inner()
        .expect("outcomes lock")
        .into_iter()
        .map(|slot| slot.expect("every fold ran"))
        .collect()
}

fn train_one_fold(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    split: &FoldSplit,
    fold: usize,
    out_dir: &Path,
) -> Result<FoldResult> {
    let mut metrics = MetricsWriter::create(&out_dir.join(format!("metrics_fold_{fold}.log")))?;
    let (result, model) =
        build_and_train_fold(dataset, model_config, train_config, split, fold, &mut metrics)?;
    metrics.finish(&result)?;
    checkpoint::save(&out_dir.join(format!("fold_{fold}.ckpt")), &model)?;
    Ok(result)
}

fn write_summary(
    out_dir: &Path,
    dataset: &Dataset,
    run_config: &RunConfig,
    results: &[FoldResult],
) -> Result<String> {
    let summary = summarize(results.to_vec());
    let mut text = String::new();
    let _ = writeln!(text, "dataset={}", dataset.name);
    let _ = writeln!(text, "graphs={}", dataset.len());
    let _ = writeln!(text, "classes={}", dataset.num_classes);
    let _ = writeln!(text, "folds={}", results.len());
    let _ = writeln!(text, "seed={}", run_config.train.seed);
    for fold in &summary.folds {
        let _ = writeln!(
            text,
            "fold_{}_accuracy={:.6} fold_{}_best_epoch={}",
            fold.fold_index, fold.test_accuracy, fold.fold_index, fold.best_epoch
        );
    }
    let _ = writeln!(text, "mean_accuracy={:.6}", summary.mean_accuracy);
    let _ = writeln!(text, "std_accuracy={:.6}", summary.std_accuracy);
    fs::write(out_dir.join("summary.txt"), &text)?;
    Ok(text)
}
