//! Stratified k-fold cross-validation splits.

use alloc::vec;
use alloc::vec::Vec;

use super::Dataset;
use crate::error::GraphError;
use crate::rng::{derive_seed, Rng};

/// Disjoint train/validation/test index sets for one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partition.
///
/// Test folds partition the dataset with per-class proportions preserved
/// within ±1 graph. Within each fold's remaining portion, 10% per class
/// (rounded, at least one where the class has graphs to spare) is held out
/// for validation. Deterministic given the seed.
pub fn stratified_kfold(
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, GraphError> {
    assert!(k >= 2, "need at least two folds");
    // Group indices by class, shuffled once for fold assignment.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, g) in dataset.graphs.iter().enumerate() {
        by_class[g.label()].push(i);
    }
    let mut rng = Rng::seed_from(derive_seed(seed, 0xF01D));
    for (class, members) in by_class.iter_mut().enumerate() {
        // A class with no members at all is vacuous; a populated class must
        // reach every fold.
        if !members.is_empty() && members.len() < k {
            return Err(GraphError::StratificationInfeasible {
                class,
                count: members.len(),
                folds: k,
            });
        }
        rng.shuffle(members);
    }

    // Deal each class round-robin into test folds.
    let mut fold_of = vec![0usize; dataset.len()];
    for members in &by_class {
        for (pos, &idx) in members.iter().enumerate() {
            fold_of[idx] = pos % k;
        }
    }

    let mut splits = Vec::with_capacity(k);
    for fold in 0..k {
        let test: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] == fold).collect();
        let mut train: Vec<usize> = Vec::new();
        let mut val: Vec<usize> = Vec::new();
        let mut fold_rng = Rng::seed_from(derive_seed(seed, 0xA110 + fold as u64));
        for members in &by_class {
            let mut pool: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| fold_of[i] != fold)
                .collect();
            fold_rng.shuffle(&mut pool);
            let take = if pool.len() >= 2 {
                let rounded = libm::floor(0.1 * pool.len() as f64 + 0.5) as usize;
                rounded.clamp(1, pool.len() - 1)
            } else {
                0
            };
            val.extend_from_slice(&pool[..take]);
            train.extend_from_slice(&pool[take..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        splits.push(FoldSplit { train, val, test });
    }
    Ok(splits)
}
