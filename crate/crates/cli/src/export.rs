//! Assignment export: per-graph, per-level cluster memberships for offline
//! visualization, as JSON or Graphviz DOT.

use serde::{Deserialize, Serialize};

use diffpool_core::graph::Graph;
use diffpool_core::model::ForwardResult;
use diffpool_core::tensor::Tensor;

/// Export container: one entry per requested graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentExport {
    pub graphs: Vec<GraphAssignments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphAssignments {
    pub graph_index: usize,
    pub label: usize,
    pub num_nodes: usize,
    pub levels: Vec<LevelAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAssignment {
    pub level: usize,
    pub num_clusters: usize,
    /// Hard membership per input node/cluster of this level.
    pub argmax: Vec<usize>,
    /// Clusters receiving at least one argmax assignment.
    pub effective_clusters: usize,
    pub coarse_adjacency: Vec<Vec<f64>>,
    /// Full soft assignment rows; emitted only when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soft_assignment: Option<Vec<Vec<f64>>>,
}

fn argmax_rows(s: &Tensor) -> Vec<usize> {
    (0..s.rows())
        .map(|i| {
            let row = s.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn matrix_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Number of clusters receiving at least one argmax vote.
pub fn effective_cluster_count(s: &Tensor) -> usize {
    let mut used = vec![false; s.cols()];
    for c in argmax_rows(s) {
        used[c] = true;
    }
    used.iter().filter(|&&u| u).count()
}

/// Builds the export record for one graph from its forward results.
pub fn graph_assignments(
    graph_index: usize,
    graph: &Graph,
    result: &ForwardResult,
    include_soft: bool,
) -> GraphAssignments {
    let levels = result
        .assignments
        .iter()
        .zip(result.coarse_adjacencies.iter())
        .enumerate()
        .map(|(level, (s, coarse))| LevelAssignment {
            level,
            num_clusters: s.cols(),
            argmax: argmax_rows(s),
            effective_clusters: effective_cluster_count(s),
            coarse_adjacency: matrix_rows(coarse),
            soft_assignment: include_soft.then(|| matrix_rows(s)),
        })
        .collect();
    GraphAssignments {
        graph_index,
        label: graph.label(),
        num_nodes: graph.node_count(),
        levels,
    }
}

const DOT_PALETTE: &[&str] = &[
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#fabebe", "#008080", "#e6beff", "#9a6324",
];

/// Renders the original graph with nodes colored by their first-level argmax
/// cluster membership.
pub fn to_dot(graph: &Graph, assignments: &GraphAssignments) -> String {
    let mut out = String::from("graph g {\n  node [style=filled];\n");
    let level0 = assignments.levels.first();
    for i in 0..graph.node_count() {
        let color = level0
            .map(|l| DOT_PALETTE[l.argmax[i] % DOT_PALETTE.len()])
            .unwrap_or("#cccccc");
        out.push_str(&format!("  n{i} [fillcolor=\"{color}\"];\n"));
    }
    for i in 0..graph.node_count() {
        for j in (i + 1)..graph.node_count() {
            if graph.adjacency().get(i, j) != 0.0 {
                out.push_str(&format!("  n{i} -- n{j};\n"));
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_count_respects_argmax() {
        let s = Tensor::from_vec(3, 3, vec![0.8, 0.1, 0.1, 0.7, 0.2, 0.1, 0.2, 0.7, 0.1]);
        assert_eq!(effective_cluster_count(&s), 2);
    }

    #[test]
    fn json_roundtrip() {
        let export = AssignmentExport {
            graphs: vec![GraphAssignments {
                graph_index: 3,
                label: 1,
                num_nodes: 2,
                levels: vec![LevelAssignment {
                    level: 0,
                    num_clusters: 2,
                    argmax: vec![0, 1],
                    effective_clusters: 2,
                    coarse_adjacency: vec![vec![1.0, 0.5], vec![0.5, 2.0]],
                    soft_assignment: None,
                }],
            }],
        };
        let text = serde_json::to_string_pretty(&export).unwrap();
        let back: AssignmentExport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, export);
    }
}
