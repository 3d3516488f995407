//! Graph and dataset types, structural feature augmentation, and padded
//! batching.
//!
//! Input adjacency matrices are binary, symmetric, and zero-diagonal; the
//! message-passing operators add their own self-loops. Node features start
//! as one-hot node labels (when the dataset has them) and are augmented with
//! two structural columns: degree and local clustering coefficient.

mod kfold;
mod tu;

pub use kfold::{stratified_kfold, FoldSplit};
pub use tu::{parse_tu_text, write_tu_text, TuFiles, TuText};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::GraphError;
use crate::tensor::Tensor;

/// One undirected graph: adjacency, node features, and a class label.
#[derive(Clone, Debug)]
pub struct Graph {
    adjacency: Tensor,
    features: Tensor,
    label: usize,
    node_labels: Option<Vec<usize>>,
    structural_features_added: bool,
}

impl Graph {
    /// Validates and wraps an input graph. The adjacency must be square,
    /// symmetric, binary, and zero on the diagonal; features must be finite
    /// with one row per node.
    pub fn new(adjacency: Tensor, features: Tensor, label: usize) -> Result<Self, GraphError> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(GraphError::InvalidGraph {
                message: format!(
                    "adjacency is {}x{}, expected square",
                    adjacency.rows(),
                    adjacency.cols()
                ),
            });
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(GraphError::InvalidGraph {
                    message: format!("self-loop at node {i}"),
                });
            }
            for j in 0..n {
                let v = adjacency.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(GraphError::InvalidGraph {
                        message: format!("non-binary adjacency entry {v} at ({i},{j})"),
                    });
                }
                if v != adjacency.get(j, i) {
                    return Err(GraphError::InvalidGraph {
                        message: format!("asymmetric adjacency at ({i},{j})"),
                    });
                }
            }
        }
        if features.rows() != n {
            return Err(GraphError::InvalidGraph {
                message: format!(
                    "feature matrix has {} rows for {} nodes",
                    features.rows(),
                    n
                ),
            });
        }
        if !features.is_finite() {
            return Err(GraphError::InvalidGraph {
                message: "non-finite feature value".into(),
            });
        }
        Ok(Graph {
            adjacency,
            features,
            label,
            node_labels: None,
            structural_features_added: false,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    pub(crate) fn set_node_labels(&mut self, labels: Vec<usize>) {
        self.node_labels = Some(labels);
    }

    pub fn has_structural_features(&self) -> bool {
        self.structural_features_added
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.adjacency.row(node).iter().sum()
    }

    pub fn edge_count(&self) -> usize {
        let total: f64 = self.adjacency.data().iter().sum();
        (total / 2.0) as usize
    }

    /// Local clustering coefficient `2·T / (deg·(deg−1))`, zero for nodes of
    /// degree below two.
    pub fn clustering_coefficient(&self, node: usize) -> f64 {
        let n = self.node_count();
        let neighbors: Vec<usize> = (0..n)
            .filter(|&j| self.adjacency.get(node, j) != 0.0)
            .collect();
        let deg = neighbors.len();
        if deg < 2 {
            return 0.0;
        }
        let mut triangles = 0usize;
        for (a, &u) in neighbors.iter().enumerate() {
            for &v in &neighbors[a + 1..] {
                if self.adjacency.get(u, v) != 0.0 {
                    triangles += 1;
                }
            }
        }
        2.0 * triangles as f64 / (deg as f64 * (deg - 1) as f64)
    }

    /// Returns a copy of the graph with the node order permuted:
    /// node `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut adjacency = Tensor::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = self.adjacency.get(i, j);
                if v != 0.0 {
                    adjacency.set(perm[i], perm[j], v);
                }
            }
        }
        let d = self.feature_dim();
        let mut features = Tensor::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                features.set(perm[i], j, self.features.get(i, j));
            }
        }
        Graph {
            adjacency,
            features,
            label: self.label,
            node_labels: self.node_labels.as_ref().map(|ls| {
                let mut out = vec![0usize; n];
                for (i, &l) in ls.iter().enumerate() {
                    out[perm[i]] = l;
                }
                out
            }),
            structural_features_added: self.structural_features_added,
        }
    }
}

/// Appends two structural feature columns — degree and local clustering
/// coefficient — to the graph's features. Existing columns (e.g. one-hot
/// node labels) are retained. Refuses a second application.
pub fn augment_features(g: &Graph) -> Result<Graph, GraphError> {
    if g.structural_features_added {
        return Err(GraphError::StructuralFeaturesAlreadyAdded);
    }
    let n = g.node_count();
    let d = g.feature_dim();
    let mut features = Tensor::zeros(n, d + 2);
    for i in 0..n {
        for j in 0..d {
            features.set(i, j, g.features.get(i, j));
        }
        features.set(i, d, g.degree(i));
        features.set(i, d + 1, g.clustering_coefficient(i));
    }
    Ok(Graph {
        adjacency: g.adjacency.clone(),
        features,
        label: g.label,
        node_labels: g.node_labels.clone(),
        structural_features_added: true,
    })
}

/// A set of labeled graphs with a shared feature dimension and contiguous
/// class indices.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(name: String, graphs: Vec<Graph>, num_classes: usize) -> Result<Self, GraphError> {
        let feature_dim = graphs.first().map(|g| g.feature_dim()).unwrap_or(0);
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(GraphError::InvalidGraph {
                    message: format!(
                        "graph {i} has feature width {}, dataset uses {feature_dim}",
                        g.feature_dim()
                    ),
                });
            }
            if g.label() >= num_classes {
                return Err(GraphError::InvalidGraph {
                    message: format!(
                        "graph {i} has label {} but dataset has {num_classes} classes",
                        g.label()
                    ),
                });
            }
        }
        Ok(Dataset {
            graphs,
            num_classes,
            feature_dim,
            name,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::node_count).max().unwrap_or(0)
    }

    pub fn mean_nodes(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        self.graphs.iter().map(|g| g.node_count() as f64).sum::<f64>() / self.graphs.len() as f64
    }

    pub fn mean_edges(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        self.graphs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / self.graphs.len() as f64
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    /// Applies [`augment_features`] to every graph and updates the shared
    /// feature width.
    pub fn augment_features_all(&mut self) -> Result<(), GraphError> {
        for g in &mut self.graphs {
            *g = augment_features(g)?;
        }
        self.feature_dim += 2;
        Ok(())
    }
}

/// Zero-padded stack of graphs with a node mask.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub n_max: usize,
    pub adjacencies: Vec<Tensor>,
    pub features: Vec<Tensor>,
    /// B×n_max indicator: 1 for real nodes, 0 for padding.
    pub node_mask: Tensor,
    pub labels: Vec<usize>,
    node_counts: Vec<usize>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Extracts the real (unpadded) graph at `index`. The mask marks exactly
    /// the first `n` rows, so the slice is the leading principal block.
    pub fn slice(&self, index: usize) -> Result<Graph, GraphError> {
        let n = self.node_counts[index];
        let adj = &self.adjacencies[index];
        let feats = &self.features[index];
        let adjacency = Tensor::from_fn(n, n, |i, j| adj.get(i, j));
        let features = Tensor::from_fn(n, feats.cols(), |i, j| feats.get(i, j));
        Graph::new(adjacency, features, self.labels[index])
    }
}

/// Zero-pads a batch of graphs to a shared node count, recording the mask.
pub fn pad_batch(graphs: &[Graph], n_max: usize) -> Result<PaddedBatch, GraphError> {
    for g in graphs {
        if g.node_count() > n_max {
            return Err(GraphError::GraphTooLarge {
                nodes: g.node_count(),
                n_max,
            });
        }
    }
    let b = graphs.len();
    let feature_dim = graphs.first().map(Graph::feature_dim).unwrap_or(0);
    let mut adjacencies = Vec::with_capacity(b);
    let mut features = Vec::with_capacity(b);
    let mut node_mask = Tensor::zeros(b, n_max);
    let mut labels = Vec::with_capacity(b);
    let mut node_counts = Vec::with_capacity(b);
    for (gi, g) in graphs.iter().enumerate() {
        let n = g.node_count();
        let mut adj = Tensor::zeros(n_max, n_max);
        for i in 0..n {
            for j in 0..n {
                let v = g.adjacency().get(i, j);
                if v != 0.0 {
                    adj.set(i, j, v);
                }
            }
        }
        let mut feat = Tensor::zeros(n_max, feature_dim);
        for i in 0..n {
            for j in 0..feature_dim {
                feat.set(i, j, g.features().get(i, j));
            }
        }
        for i in 0..n {
            node_mask.set(gi, i, 1.0);
        }
        adjacencies.push(adj);
        features.push(feat);
        labels.push(g.label());
        node_counts.push(n);
    }
    Ok(PaddedBatch {
        n_max,
        adjacencies,
        features,
        node_mask,
        labels,
        node_counts,
    })
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;

    /// Two triangles {0,1,2} and {3,4,5} joined by the edge (2,3).
    pub fn two_triangles_bridge() -> Graph {
        let mut adjacency = Tensor::zeros(6, 6);
        for &(i, j) in &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)] {
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
        Graph::new(adjacency, Tensor::ones(6, 2), 0).unwrap()
    }

    pub fn triangle() -> Graph {
        let mut adjacency = Tensor::zeros(3, 3);
        for &(i, j) in &[(0, 1), (1, 2), (0, 2)] {
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
        Graph::new(adjacency, Tensor::ones(3, 1), 0).unwrap()
    }

    pub fn path3() -> Graph {
        let mut adjacency = Tensor::zeros(3, 3);
        for &(i, j) in &[(0, 1), (1, 2)] {
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
        Graph::new(adjacency, Tensor::ones(3, 1), 0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;

    #[test]
    fn graph_validation_rejects_asymmetry() {
        let mut adj = Tensor::zeros(2, 2);
        adj.set(0, 1, 1.0);
        let err = Graph::new(adj, Tensor::zeros(2, 1), 0).unwrap_err();
        assert!(matches!(err, GraphError::InvalidGraph { .. }));
    }

    #[test]
    fn graph_validation_rejects_self_loop() {
        let mut adj = Tensor::zeros(2, 2);
        adj.set(0, 0, 1.0);
        assert!(Graph::new(adj, Tensor::zeros(2, 1), 0).is_err());
    }

    #[test]
    fn triangle_structural_features() {
        let g = augment_features(&triangle()).unwrap();
        // Every node has degree 2 and clustering coefficient 1.
        for i in 0..3 {
            assert_eq!(g.features().get(i, 1), 2.0);
            assert_eq!(g.features().get(i, 2), 1.0);
        }
    }

    #[test]
    fn path_has_no_triangles() {
        let g = augment_features(&path3()).unwrap();
        assert_eq!(g.features().get(1, 1), 2.0); // middle degree
        assert_eq!(g.features().get(1, 2), 0.0); // no triangles
        assert_eq!(g.features().get(0, 1), 1.0); // end degree
        assert_eq!(g.features().get(0, 2), 0.0);
    }

    #[test]
    fn bridge_node_clustering_coefficient() {
        // Node 2 has degree 3 (neighbors 0, 1, 3) and one triangle (0,1):
        // c = 2·1/(3·2) = 1/3.
        let g = two_triangles_bridge();
        assert_eq!(g.degree(2), 3.0);
        let c = g.clustering_coefficient(2);
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn augment_refuses_double_application() {
        let g = augment_features(&triangle()).unwrap();
        assert!(matches!(
            augment_features(&g),
            Err(GraphError::StructuralFeaturesAlreadyAdded)
        ));
    }

    #[test]
    fn degree_sum_is_twice_edge_count() {
        let g = two_triangles_bridge();
        let degree_sum: f64 = (0..g.node_count()).map(|i| g.degree(i)).sum();
        assert_eq!(degree_sum, 2.0 * g.edge_count() as f64);
    }

    #[test]
    fn pad_batch_masks_and_content() {
        let mut adj = Tensor::zeros(2, 2);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        let g = Graph::new(adj, Tensor::ones(2, 3), 1).unwrap();
        let batch = pad_batch(&[g], 4).unwrap();
        assert_eq!(batch.node_mask.data(), &[1.0, 1.0, 0.0, 0.0]);
        let padded = &batch.adjacencies[0];
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (0, 1) || (i, j) == (1, 0) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(padded.get(i, j), expected);
            }
        }
        // Feature padding rows are zero.
        assert_eq!(batch.features[0].row(3), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pad_batch_rejects_oversized_graph() {
        let g = triangle();
        assert!(matches!(
            pad_batch(&[g], 2),
            Err(GraphError::GraphTooLarge { nodes: 3, n_max: 2 })
        ));
    }

    #[test]
    fn slice_recovers_original() {
        let g = two_triangles_bridge();
        let batch = pad_batch(std::slice::from_ref(&g), 9).unwrap();
        let back = batch.slice(0).unwrap();
        assert_eq!(back.adjacency(), g.adjacency());
        assert_eq!(back.features(), g.features());
        assert_eq!(back.label(), g.label());
    }

    #[test]
    fn identical_graphs_pad_to_identical_slices() {
        let g = triangle();
        let batch = pad_batch(&[g.clone(), g.clone()], 5).unwrap();
        assert_eq!(batch.adjacencies[0], batch.adjacencies[1]);
        assert_eq!(batch.features[0], batch.features[1]);
    }

    #[test]
    fn permuted_graph_preserves_structure() {
        let g = two_triangles_bridge();
        let perm = [3, 4, 5, 0, 1, 2];
        let p = g.permuted(&perm);
        assert_eq!(p.edge_count(), g.edge_count());
        // Edge (2,3) becomes (perm[2], perm[3]) = (5, 0).
        assert_eq!(p.adjacency().get(5, 0), 1.0);
    }
}
