//! Optimization: Adam with bias correction, global-norm gradient clipping,
//! per-graph stochastic updates, early stopping on a windowed validation
//! loss, and stratified cross-validation.
//!
//! Training is reproducible bit-for-bit from `(dataset, configs, seed)`:
//! every fold derives its own model-init and shuffle streams, so folds can
//! also be run in parallel by a caller without changing results.

use alloc::vec::Vec;

use libm::{pow, sqrt};

use crate::error::{CoreError, GraphError};
use crate::graph::{stratified_kfold, Dataset, FoldSplit};
use crate::model::{build_model, total_loss_var, HierarchicalModel, ModelConfig};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{Mode, ParamStore, Tape};

/// Optimizer and schedule hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Gradients are rescaled whenever their global ℓ2 norm exceeds this.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Width of the validation-loss moving average watched for improvement.
    pub early_stop_window: usize,
    /// Epochs without windowed improvement before stopping.
    pub patience: usize,
    pub folds: usize,
    pub seed: u64,
    /// Weights for the link-prediction and entropy objectives.
    pub w_lp: f64,
    pub w_e: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 3000,
            clip_norm: 2.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_window: 50,
            patience: 100,
            folds: 10,
            seed: 0,
            w_lp: 1.0,
            w_e: 1.0,
        }
    }
}

/// Per-epoch losses handed to observers (the CLI writes them to metrics
/// logs; timing is the caller's concern).
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lp_loss: f64,
    pub ent_loss: f64,
}

/// Callback invoked after every epoch of [`train_fold`].
pub trait EpochObserver {
    fn on_epoch(&mut self, fold: usize, record: &EpochRecord);
}

/// Observer that discards records.
pub struct NullObserver;

impl EpochObserver for NullObserver {
    fn on_epoch(&mut self, _fold: usize, _record: &EpochRecord) {}
}

/// Outcome of training one fold.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold_index: usize,
    pub best_epoch: usize,
    pub test_accuracy: f64,
    pub train_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
}

/// Cross-validation aggregate.
#[derive(Clone, Debug)]
pub struct CvSummary {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub folds: Vec<FoldResult>,
}

/// Rescales all gradients so their global ℓ2 norm does not exceed
/// `max_norm`; returns the applied factor (1 when no clipping happened).
pub fn clip_global_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let mut squared = 0.0;
    for p in store.params() {
        if let Some(g) = &p.value.grad {
            squared += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = sqrt(squared);
    if norm <= max_norm {
        return 1.0;
    }
    let factor = max_norm / norm;
    for p in store.params_mut() {
        if let Some(g) = &mut p.value.grad {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
    factor
}

/// One Adam update with bias correction; `step_count` starts at 1.
pub fn adam_step(store: &mut ParamStore, config: &TrainConfig, step_count: usize) {
    debug_assert!(step_count >= 1);
    let b1 = config.beta1;
    let b2 = config.beta2;
    let bias1 = 1.0 - pow(b1, step_count as f64);
    let bias2 = 1.0 - pow(b2, step_count as f64);
    for p in store.params_mut() {
        let Some(grad) = p.value.grad.clone() else {
            continue;
        };
        for (i, &g) in grad.iter().enumerate() {
            p.adam_m[i] = b1 * p.adam_m[i] + (1.0 - b1) * g;
            p.adam_v[i] = b2 * p.adam_v[i] + (1.0 - b2) * g * g;
            let m_hat = p.adam_m[i] / bias1;
            let v_hat = p.adam_v[i] / bias2;
            p.value.data_mut()[i] -= config.learning_rate * m_hat / (sqrt(v_hat) + config.adam_eps);
        }
    }
}

/// Mean total loss over the indexed graphs, using per-graph normalization
/// statistics.
pub fn evaluate_mean_loss(
    model: &mut HierarchicalModel,
    dataset: &Dataset,
    indices: &[usize],
    weights: (f64, f64),
) -> Result<f64, CoreError> {
    let mut total = 0.0;
    for &i in indices {
        let result = model.forward(&dataset.graphs[i], Mode::BatchStats)?;
        total += crate::model::total_loss(&result, weights);
    }
    Ok(total / indices.len() as f64)
}

/// Fraction of the indexed graphs classified correctly.
pub fn evaluate_accuracy(
    model: &mut HierarchicalModel,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<f64, CoreError> {
    let mut correct = 0usize;
    for &i in indices {
        if model.predict(&dataset.graphs[i])? == dataset.graphs[i].label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Trains one fold with per-graph stochastic updates.
///
/// Each epoch shuffles the training indices (seeded stream), takes one
/// clipped Adam step per graph, then evaluates the validation loss. A moving
/// average over `early_stop_window` epochs is watched; after `patience`
/// epochs without improvement training stops. The parameters of the best raw
/// validation epoch are restored before measuring test accuracy.
pub fn train_fold(
    model: &mut HierarchicalModel,
    dataset: &Dataset,
    split: &FoldSplit,
    config: &TrainConfig,
    fold_index: usize,
    observer: &mut dyn EpochObserver,
) -> Result<FoldResult, CoreError> {
    if split.train.is_empty() {
        return Err(CoreError::Graph(GraphError::EmptySplit { which: "train" }));
    }
    if split.val.is_empty() {
        return Err(CoreError::Graph(GraphError::EmptySplit { which: "validation" }));
    }
    if split.test.is_empty() {
        return Err(CoreError::Graph(GraphError::EmptySplit { which: "test" }));
    }
    let weights = (config.w_lp, config.w_e);
    let mut rng = Rng::seed_from(derive_seed(config.seed, 0x0e0c_0000 + fold_index as u64));
    let mut order: Vec<usize> = split.train.clone();

    let mut step_count = 0usize;
    let mut train_curve = Vec::new();
    let mut validation_curve = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot = model.store().snapshot();
    let mut best_window_avg = f64::INFINITY;
    let mut stall = 0usize;

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut train_loss_sum = 0.0;
        let mut lp_sum = 0.0;
        let mut ent_sum = 0.0;
        for &idx in &order {
            model.store_mut().zero_grads();
            let mut tape = Tape::new();
            let pass = model.forward_on_tape(&mut tape, &dataset.graphs[idx], Mode::Train)?;
            let loss = total_loss_var(&mut tape, &pass, config.w_lp, config.w_e)?;
            tape.backward(loss)?;
            tape.accumulate_param_grads(model.store_mut());
            clip_global_norm(model.store_mut(), config.clip_norm);
            step_count += 1;
            adam_step(model.store_mut(), config, step_count);

            train_loss_sum += tape.values(loss)?[0];
            for &(lp, ent) in &pass.aux {
                lp_sum += tape.values(lp)?[0];
                ent_sum += tape.values(ent)?[0];
            }
        }
        let train_loss = train_loss_sum / order.len() as f64;
        let val_loss = evaluate_mean_loss(model, dataset, &split.val, weights)?;
        train_curve.push(train_loss);
        validation_curve.push(val_loss);
        observer.on_epoch(
            fold_index,
            &EpochRecord {
                epoch,
                train_loss,
                val_loss,
                lp_loss: lp_sum / order.len() as f64,
                ent_loss: ent_sum / order.len() as f64,
            },
        );

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_snapshot = model.store().snapshot();
        }

        if validation_curve.len() >= config.early_stop_window {
            let window = &validation_curve[validation_curve.len() - config.early_stop_window..];
            let avg = window.iter().sum::<f64>() / window.len() as f64;
            if avg < best_window_avg - 1e-12 {
                best_window_avg = avg;
                stall = 0;
            } else {
                stall += 1;
                if stall >= config.patience {
                    break;
                }
            }
        }
    }

    model.store_mut().restore(&best_snapshot);
    let test_accuracy = evaluate_accuracy(model, dataset, &split.test)?;
    Ok(FoldResult {
        fold_index,
        best_epoch,
        test_accuracy,
        train_curve,
        validation_curve,
    })
}

/// Seed used to initialize the model for one fold; exposed so parallel
/// runners reproduce the sequential results exactly.
pub fn fold_model_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, 0xB11D + fold as u64)
}

/// Builds and trains the model for one fold of a precomputed split,
/// returning the trained model (restored to its best-validation parameters)
/// alongside the fold outcome.
pub fn build_and_train_fold(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    split: &FoldSplit,
    fold_index: usize,
    observer: &mut dyn EpochObserver,
) -> Result<(FoldResult, HierarchicalModel), CoreError> {
    let mut model = build_model(
        model_config,
        dataset.feature_dim,
        fold_model_seed(config.seed, fold_index),
    )?;
    let result = train_fold(&mut model, dataset, split, config, fold_index, observer)?;
    Ok((result, model))
}

/// Builds and trains the model for one fold of a precomputed split.
pub fn run_fold(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    split: &FoldSplit,
    fold_index: usize,
    observer: &mut dyn EpochObserver,
) -> Result<FoldResult, CoreError> {
    build_and_train_fold(dataset, model_config, config, split, fold_index, observer)
        .map(|(result, _)| result)
}

/// Stratified k-fold cross-validation; reports mean and sample standard
/// deviation of the per-fold test accuracies.
pub fn cross_validate(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<CvSummary, CoreError> {
    let splits = stratified_kfold(dataset, config.folds, config.seed)?;
    let mut folds = Vec::with_capacity(splits.len());
    for (fold_index, split) in splits.iter().enumerate() {
        folds.push(run_fold(dataset, model_config, config, split, fold_index, observer)?);
    }
    Ok(summarize(folds))
}

/// Mean and sample standard deviation over fold accuracies.
pub fn summarize(folds: Vec<FoldResult>) -> CvSummary {
    let n = folds.len() as f64;
    let mean = folds.iter().map(|f| f.test_accuracy).sum::<f64>() / n;
    let std = if folds.len() > 1 {
        let var = folds
            .iter()
            .map(|f| (f.test_accuracy - mean) * (f.test_accuracy - mean))
            .sum::<f64>()
            / (n - 1.0);
        sqrt(var)
    } else {
        0.0
    };
    CvSummary {
        mean_accuracy: mean,
        std_accuracy: std,
        folds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::AssignmentMode;
    use crate::synth::planted_hierarchy;
    use crate::tensor::Tensor;
    use alloc::string::ToString;
    use alloc::vec;

    fn store_with_grad(grad: Vec<f64>) -> (ParamStore, crate::tensor::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add_param("p".to_string(), Tensor::zeros(1, grad.len()));
        store.param_mut(id).value.grad = Some(grad);
        (store, id)
    }

    #[test]
    fn clip_noop_below_threshold() {
        let (mut store, id) = store_with_grad(vec![0.0, 0.0]);
        assert_eq!(clip_global_norm(&mut store, 2.0), 1.0);
        assert_eq!(store.param(id).value.grad.as_deref().unwrap(), &[0.0, 0.0]);

        let (mut store, id) = store_with_grad(vec![1.0, 1.0]);
        let before = store.param(id).value.grad.clone().unwrap();
        assert_eq!(clip_global_norm(&mut store, 2.0), 1.0);
        assert_eq!(store.param(id).value.grad.clone().unwrap(), before);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        // Gradient [3, 4] has norm 5; factor 0.4 brings it to [1.2, 1.6].
        let (mut store, id) = store_with_grad(vec![3.0, 4.0]);
        let factor = clip_global_norm(&mut store, 2.0);
        assert!((factor - 0.4).abs() < 1e-15);
        let g = store.param(id).value.grad.clone().unwrap();
        assert!((g[0] - 1.2).abs() < 1e-15);
        assert!((g[1] - 1.6).abs() < 1e-15);
        let norm = sqrt(g.iter().map(|v| v * v).sum::<f64>());
        assert!(norm <= 2.0 + 1e-12);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let (mut store, id) = store_with_grad(vec![0.3, -0.7]);
        let config = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        adam_step(&mut store, &config, 1);
        let value = store.param(id).value.data();
        // Bias-corrected m̂/√v̂ is ±1 up to ε on the first step.
        assert!((value[0] + 0.01).abs() < 1e-6);
        assert!((value[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let (mut store, id) = store_with_grad(vec![0.0, 0.0]);
        let config = TrainConfig::default();
        for step in 1..=5 {
            adam_step(&mut store, &config, step);
        }
        assert_eq!(store.param(id).value.data(), &[0.0, 0.0]);
        assert!(store.param(id).adam_m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn adam_reaches_quadratic_minimum() {
        // f(x, y) = (x − 3)² + 2(y + 1)², minimizer (3, −1).
        let mut store = ParamStore::new();
        let id = store.add_param("q".to_string(), Tensor::zeros(1, 2));
        let config = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        for step in 1..=200 {
            let (x, y) = {
                let d = store.param(id).value.data();
                (d[0], d[1])
            };
            store.param_mut(id).value.grad = Some(vec![2.0 * (x - 3.0), 4.0 * (y + 1.0)]);
            adam_step(&mut store, &config, step);
        }
        let d = store.param(id).value.data();
        assert!((d[0] - 3.0).abs() < 1e-3, "x = {}", d[0]);
        assert!((d[1] + 1.0).abs() < 1e-3, "y = {}", d[1]);
        for p in store.params() {
            assert!(p.adam_m.iter().all(|m| m.is_finite()));
            assert!(p.adam_v.iter().all(|v| v.is_finite()));
        }
    }

    fn quick_configs(dataset: &Dataset) -> (ModelConfig, TrainConfig) {
        let mut mc = ModelConfig::new(dataset.num_classes, dataset.max_nodes());
        mc.hidden_dim = 8;
        mc.gnn_layers_per_block = 1;
        mc.num_diffpool_layers = 1;
        mc.cluster_ratio = 0.2;
        let tc = TrainConfig {
            max_epochs: 6,
            early_stop_window: 3,
            patience: 3,
            folds: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        (mc, tc)
    }

    #[test]
    fn train_fold_rejects_empty_splits() {
        let mut dataset = planted_hierarchy(20, 3).unwrap();
        dataset.augment_features_all().unwrap();
        let (mc, tc) = quick_configs(&dataset);
        let mut model = build_model(&mc, dataset.feature_dim, 1).unwrap();
        let split = FoldSplit {
            train: alloc::vec![0, 1],
            val: alloc::vec![],
            test: alloc::vec![2],
        };
        assert!(matches!(
            train_fold(&mut model, &dataset, &split, &tc, 0, &mut NullObserver),
            Err(CoreError::Graph(GraphError::EmptySplit { which: "validation" }))
        ));
    }

    #[test]
    fn restored_parameters_match_best_validation_epoch() {
        let mut dataset = planted_hierarchy(20, 9).unwrap();
        dataset.augment_features_all().unwrap();
        let (mc, mut tc) = quick_configs(&dataset);
        tc.max_epochs = 12;
        let splits = stratified_kfold(&dataset, 2, tc.seed).unwrap();
        let mut model = build_model(&mc, dataset.feature_dim, fold_model_seed(tc.seed, 0)).unwrap();
        let result =
            train_fold(&mut model, &dataset, &splits[0], &tc, 0, &mut NullObserver).unwrap();
        let best = result
            .validation_curve
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(result.validation_curve[result.best_epoch], best);
        // Evaluating the restored parameters reproduces the best epoch's
        // validation loss exactly.
        let val_now =
            evaluate_mean_loss(&mut model, &dataset, &splits[0].val, (tc.w_lp, tc.w_e)).unwrap();
        assert_eq!(val_now, best);
    }

    #[test]
    fn same_seed_identical_fold_results() {
        let mut dataset = planted_hierarchy(20, 13).unwrap();
        dataset.augment_features_all().unwrap();
        let (mc, tc) = quick_configs(&dataset);
        let splits = stratified_kfold(&dataset, 2, tc.seed).unwrap();
        let a = run_fold(&dataset, &mc, &tc, &splits[0], 0, &mut NullObserver).unwrap();
        let b = run_fold(&dataset, &mc, &tc, &splits[0], 0, &mut NullObserver).unwrap();
        assert_eq!(a.test_accuracy, b.test_accuracy);
        assert_eq!(a.train_curve, b.train_curve);
        assert_eq!(a.validation_curve, b.validation_curve);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn constant_label_dataset_reaches_full_accuracy() {
        // Every graph carries the majority class; the classifier bias alone
        // solves it.
        let mut dataset = planted_hierarchy(20, 3).unwrap();
        dataset.augment_features_all().unwrap();
        let graphs: alloc::vec::Vec<Graph> = dataset
            .graphs
            .iter()
            .map(|g| {
                Graph::new(g.adjacency().clone(), g.features().clone(), 0).unwrap()
            })
            .collect();
        let dataset = Dataset::new("CONST".to_string(), graphs, 2).unwrap();
        let (mc, mut tc) = quick_configs(&dataset);
        tc.max_epochs = 10;
        let summary = cross_validate(&dataset, &mc, &tc, &mut NullObserver).unwrap();
        assert_eq!(summary.mean_accuracy, 1.0);
        assert_eq!(summary.std_accuracy, 0.0);
    }

    #[test]
    fn summarize_mean_and_sample_std() {
        let folds = alloc::vec![
            FoldResult {
                fold_index: 0,
                best_epoch: 0,
                test_accuracy: 0.8,
                train_curve: alloc::vec![],
                validation_curve: alloc::vec![],
            },
            FoldResult {
                fold_index: 1,
                best_epoch: 0,
                test_accuracy: 1.0,
                train_curve: alloc::vec![],
                validation_curve: alloc::vec![],
            },
        ];
        let summary = summarize(folds);
        assert!((summary.mean_accuracy - 0.9).abs() < 1e-15);
        assert!((summary.std_accuracy - 0.1414).abs() < 1e-3);
    }

    #[test]
    fn deterministic_assignment_mode_trains() {
        let mut dataset = planted_hierarchy(20, 21).unwrap();
        dataset.augment_features_all().unwrap();
        let (mut mc, tc) = quick_configs(&dataset);
        mc.assignment_mode = AssignmentMode::Deterministic;
        let splits = stratified_kfold(&dataset, 2, tc.seed).unwrap();
        let result = run_fold(&dataset, &mc, &tc, &splits[0], 0, &mut NullObserver).unwrap();
        assert!(result.test_accuracy.is_finite());
        assert!(!result.train_curve.is_empty());
    }

    #[test]
    fn training_loss_trends_downward_early() {
        let mut dataset = planted_hierarchy(40, 31).unwrap();
        dataset.augment_features_all().unwrap();
        let mut mc = ModelConfig::new(dataset.num_classes, dataset.max_nodes());
        mc.hidden_dim = 16;
        mc.gnn_layers_per_block = 2;
        mc.num_diffpool_layers = 1;
        mc.cluster_ratio = 0.25;
        let tc = TrainConfig {
            max_epochs: 50,
            early_stop_window: 50,
            patience: 100,
            folds: 2,
            seed: 17,
            w_lp: 10.0,
            ..TrainConfig::default()
        };
        let splits = stratified_kfold(&dataset, 2, tc.seed).unwrap();
        let result = run_fold(&dataset, &mc, &tc, &splits[0], 0, &mut NullObserver).unwrap();
        let early: f64 = result.train_curve[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = result.train_curve[result.train_curve.len() - 10..]
            .iter()
            .sum::<f64>()
            / 10.0;
        assert!(
            late < early,
            "loss moving average did not decrease: {early} -> {late}"
        );
    }
}
