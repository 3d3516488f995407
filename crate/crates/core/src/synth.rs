//! Planted-hierarchy synthetic benchmark.
//!
//! Two classes of connected 60-node graphs that differ in community
//! granularity: class 0 has two communities of 30, class 1 has six
//! communities of 10. Class 0's edge probabilities are chosen so expected
//! edge counts, mean degree, and mean clustering coefficient match class 1 —
//! flat node-level statistics carry almost no signal, while the block
//! structure (two coarse blobs versus six tight modules) does. Graphs are
//! resampled until connected.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::graph::{Dataset, Graph};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

pub const NODES_PER_GRAPH: usize = 60;
/// Class 0: two communities of 30. Intra/inter probabilities tuned so the
/// expected edge count (≈211) matches class 1's (≈210).
pub const CLASS0_COMMUNITIES: usize = 2;
pub const CLASS0_INTRA_P: f64 = 0.238;
pub const CLASS0_INTER_P: f64 = 0.005;
/// Class 1: six communities of 10.
pub const CLASS1_COMMUNITIES: usize = 6;
pub const CLASS1_INTRA_P: f64 = 0.5;
pub const CLASS1_INTER_P: f64 = 0.05;

fn community_of(node: usize, communities: usize) -> usize {
    node / (NODES_PER_GRAPH / communities)
}

fn connected(adjacency: &Tensor) -> bool {
    let n = adjacency.rows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if !seen[v] && adjacency.get(u, v) != 0.0 {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

fn sample_graph(rng: &mut Rng, label: usize) -> Graph {
    let (communities, p_intra, p_inter) = if label == 0 {
        (CLASS0_COMMUNITIES, CLASS0_INTRA_P, CLASS0_INTER_P)
    } else {
        (CLASS1_COMMUNITIES, CLASS1_INTRA_P, CLASS1_INTER_P)
    };
    loop {
        let n = NODES_PER_GRAPH;
        let mut adjacency = Tensor::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if community_of(i, communities) == community_of(j, communities) {
                    p_intra
                } else {
                    p_inter
                };
                if rng.next_f64() < p {
                    adjacency.set(i, j, 1.0);
                    adjacency.set(j, i, 1.0);
                }
            }
        }
        if connected(&adjacency) {
            // Features start empty; structural augmentation adds degree and
            // clustering-coefficient columns downstream.
            return Graph::new(adjacency, Tensor::zeros(n, 0), label)
                .expect("sampled adjacency is valid");
        }
    }
}

/// Generates the two-class planted-hierarchy dataset. `num_graphs` must be
/// even and at least 20 so both classes are populated evenly.
pub fn planted_hierarchy(num_graphs: usize, seed: u64) -> Result<Dataset, CoreError> {
    if num_graphs < 20 || !num_graphs.is_multiple_of(2) {
        return Err(CoreError::Config(format!(
            "planted-hierarchy needs an even graph count of at least 20, got {num_graphs}"
        )));
    }
    let mut rng = Rng::seed_from(derive_seed(seed, 0x5714));
    let graphs: Vec<Graph> = (0..num_graphs).map(|i| sample_graph(&mut rng, i % 2)).collect();
    Ok(Dataset::new("PLANTED".to_string(), graphs, 2)
        .expect("generated graphs share feature width"))
}
