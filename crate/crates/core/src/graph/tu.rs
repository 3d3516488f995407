//! TU-format text parsing and serialization.
//!
//! The TU convention stores one dataset as parallel plain-text files:
//!
//! * `<name>_A.txt` — comma-separated 1-indexed node pairs, one edge per line;
//! * `<name>_graph_indicator.txt` — line `i` holds the 1-indexed graph id of
//!   node `i`;
//! * `<name>_graph_labels.txt` — line `g` holds graph `g`'s integer label
//!   (arbitrary integers, relabeled to contiguous 0-based classes);
//! * `<name>_node_labels.txt` (optional) — line `i` holds node `i`'s integer
//!   label, which becomes a one-hot feature block.
//!
//! Whitespace around commas and a blank trailing line are tolerated.
//! Duplicate and reverse edges collapse to a single symmetric entry;
//! self-loops are dropped (the propagation operators add their own).
//!
//! This module works on in-memory strings so it stays usable without a file
//! system; the CLI crate layers file IO on top.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, Graph};
use crate::error::GraphError;
use crate::tensor::Tensor;

/// In-memory contents of the TU files for one dataset.
pub struct TuText<'a> {
    pub name: &'a str,
    pub edges: &'a str,
    pub graph_indicator: &'a str,
    pub graph_labels: &'a str,
    pub node_labels: Option<&'a str>,
}

/// Serialized TU file contents produced by [`write_tu_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct TuFiles {
    pub edges: String,
    pub graph_indicator: String,
    pub graph_labels: String,
    pub node_labels: Option<String>,
}

fn parse_int(file: &str, line_no: usize, token: &str) -> Result<i64, GraphError> {
    token.trim().parse::<i64>().map_err(|_| GraphError::Format {
        file: file.to_string(),
        line: line_no,
        message: format!("expected an integer, got {:?}", token.trim()),
    })
}

/// Non-empty lines with their 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses the TU text files into a [`Dataset`] of binary symmetric graphs.
pub fn parse_tu_text(input: &TuText<'_>) -> Result<Dataset, GraphError> {
    let indicator_file = format!("{}_graph_indicator.txt", input.name);
    let edges_file = format!("{}_A.txt", input.name);
    let labels_file = format!("{}_graph_labels.txt", input.name);
    let node_labels_file = format!("{}_node_labels.txt", input.name);

    // Node → graph assignment (0-based on both sides).
    let mut node_graph: Vec<usize> = Vec::new();
    for (line_no, line) in numbered_lines(input.graph_indicator) {
        let gid = parse_int(&indicator_file, line_no, line)?;
        if gid < 1 {
            return Err(GraphError::Format {
                file: indicator_file.clone(),
                line: line_no,
                message: format!("graph id {gid} must be positive"),
            });
        }
        node_graph.push((gid - 1) as usize);
    }
    let total_nodes = node_graph.len();
    let num_graphs = node_graph.iter().copied().max().map_or(0, |m| m + 1);

    // Per-graph node counts and offsets; node ids must be grouped per graph.
    let mut counts = vec![0usize; num_graphs];
    for &g in &node_graph {
        counts[g] += 1;
    }
    let mut offsets = vec![0usize; num_graphs];
    let mut acc = 0;
    for (g, &c) in counts.iter().enumerate() {
        offsets[g] = acc;
        acc += c;
        if c == 0 {
            return Err(GraphError::Format {
                file: indicator_file.clone(),
                line: 0,
                message: format!("graph {} has no nodes", g + 1),
            });
        }
    }
    for (i, &g) in node_graph.iter().enumerate() {
        if i < offsets[g] || i >= offsets[g] + counts[g] {
            return Err(GraphError::Format {
                file: indicator_file.clone(),
                line: i + 1,
                message: "graph indicator is not grouped by graph".to_string(),
            });
        }
    }

    // Graph labels, relabeled to contiguous 0-based classes in sorted order.
    let mut raw_labels: Vec<i64> = Vec::new();
    for (line_no, line) in numbered_lines(input.graph_labels) {
        raw_labels.push(parse_int(&labels_file, line_no, line)?);
    }
    if raw_labels.len() != num_graphs {
        return Err(GraphError::Format {
            file: labels_file.clone(),
            line: raw_labels.len(),
            message: format!(
                "{} labels for {} graphs",
                raw_labels.len(),
                num_graphs
            ),
        });
    }
    let mut distinct: Vec<i64> = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let num_classes = distinct.len();
    let class_of = |raw: i64| distinct.binary_search(&raw).expect("label present");

    // Optional node labels, relabeled the same way, one-hot encoded.
    let node_label_ids: Option<Vec<usize>> = match input.node_labels {
        Some(text) => {
            let mut raw: Vec<i64> = Vec::new();
            for (line_no, line) in numbered_lines(text) {
                raw.push(parse_int(&node_labels_file, line_no, line)?);
            }
            if raw.len() != total_nodes {
                return Err(GraphError::Format {
                    file: node_labels_file.clone(),
                    line: raw.len(),
                    message: format!("{} node labels for {} nodes", raw.len(), total_nodes),
                });
            }
            let mut values = raw.clone();
            values.sort_unstable();
            values.dedup();
            Some(
                raw.iter()
                    .map(|v| values.binary_search(v).expect("label present"))
                    .collect(),
            )
        }
        None => None,
    };
    let label_width = node_label_ids
        .as_ref()
        .map(|ids| ids.iter().copied().max().map_or(0, |m| m + 1))
        .unwrap_or(0);

    // Edges: accumulate per-graph symmetric adjacency.
    let mut adjacency: Vec<Tensor> = counts.iter().map(|&c| Tensor::zeros(c, c)).collect();
    for (line_no, line) in numbered_lines(input.edges) {
        let mut parts = line.split(',');
        let (u_tok, v_tok) = match (parts.next(), parts.next()) {
            (Some(u), Some(v)) if parts.next().is_none() => (u, v),
            _ => {
                return Err(GraphError::Format {
                    file: edges_file.clone(),
                    line: line_no,
                    message: format!("expected \"u, v\", got {line:?}"),
                })
            }
        };
        let u = parse_int(&edges_file, line_no, u_tok)?;
        let v = parse_int(&edges_file, line_no, v_tok)?;
        for &id in &[u, v] {
            if id < 1 || id as usize > total_nodes {
                return Err(GraphError::NodeIndexOutOfRange {
                    file: edges_file.clone(),
                    line: line_no,
                    index: id.max(0) as usize,
                    max: total_nodes,
                });
            }
        }
        let (u, v) = ((u - 1) as usize, (v - 1) as usize);
        let g = node_graph[u];
        if node_graph[v] != g {
            return Err(GraphError::Format {
                file: edges_file.clone(),
                line: line_no,
                message: format!(
                    "edge ({}, {}) connects graphs {} and {}",
                    u + 1,
                    v + 1,
                    g + 1,
                    node_graph[v] + 1
                ),
            });
        }
        if u == v {
            continue; // drop self-loops; propagation adds its own
        }
        let (lu, lv) = (u - offsets[g], v - offsets[g]);
        adjacency[g].set(lu, lv, 1.0);
        adjacency[g].set(lv, lu, 1.0);
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, adj) in adjacency.into_iter().enumerate() {
        let n = counts[g];
        let features = match &node_label_ids {
            Some(ids) => {
                let mut f = Tensor::zeros(n, label_width);
                for local in 0..n {
                    f.set(local, ids[offsets[g] + local], 1.0);
                }
                f
            }
            None => Tensor::zeros(n, 0),
        };
        let mut graph = Graph::new(adj, features, class_of(raw_labels[g]))?;
        if let Some(ids) = &node_label_ids {
            graph.set_node_labels(ids[offsets[g]..offsets[g] + n].to_vec());
        }
        graphs.push(graph);
    }

    Dataset::new(input.name.to_string(), graphs, num_classes)
}

/// Serializes a dataset back into TU text files. Node labels are emitted only
/// when every graph carries them.
pub fn write_tu_text(dataset: &Dataset) -> TuFiles {
    let mut edges = String::new();
    let mut indicator = String::new();
    let mut graph_labels = String::new();
    let mut node_labels = String::new();
    let all_node_labels = dataset.graphs.iter().all(|g| g.node_labels().is_some());

    let mut offset = 0usize;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        let n = g.node_count();
        for i in 0..n {
            indicator.push_str(&format!("{}\n", gi + 1));
            for j in (i + 1)..n {
                if g.adjacency().get(i, j) != 0.0 {
                    // Both directions, matching the published datasets.
                    edges.push_str(&format!("{}, {}\n", offset + i + 1, offset + j + 1));
                    edges.push_str(&format!("{}, {}\n", offset + j + 1, offset + i + 1));
                }
            }
        }
        if all_node_labels {
            for &l in g.node_labels().expect("checked above") {
                node_labels.push_str(&format!("{l}\n"));
            }
        }
        graph_labels.push_str(&format!("{}\n", g.label()));
        offset += n;
    }
    TuFiles {
        edges,
        graph_indicator: indicator,
        graph_labels,
        node_labels: if all_node_labels {
            Some(node_labels)
        } else {
            None
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Graph 1: triangle on nodes 1..3; graph 2: edge between nodes 4, 5.
    fn toy_input() -> TuText<'static> {
        TuText {
            name: "TOY",
            edges: "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n",
            graph_indicator: "1\n1\n1\n2\n2\n",
            graph_labels: "1\n2\n",
            node_labels: None,
        }
    }

    #[test]
    fn toy_dataset_parses() {
        let ds = parse_tu_text(&toy_input()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.graphs[0].node_count(), 3);
        assert_eq!(ds.graphs[1].node_count(), 2);
        assert_eq!(ds.graphs[0].label(), 0);
        assert_eq!(ds.graphs[1].label(), 1);
        assert_eq!(ds.graphs[0].edge_count(), 3);
        assert_eq!(ds.graphs[1].edge_count(), 1);
    }

    #[test]
    fn duplicate_and_one_directional_edges_collapse() {
        let input = TuText {
            name: "T",
            edges: "1, 2\n1, 2\n2, 3\n", // no reverse entries at all
            graph_indicator: "1\n1\n1\n",
            graph_labels: "5\n",
            node_labels: None,
        };
        let ds = parse_tu_text(&input).unwrap();
        assert_eq!(ds.graphs[0].edge_count(), 2);
        assert_eq!(ds.graphs[0].adjacency().get(1, 0), 1.0);
    }

    #[test]
    fn whitespace_and_trailing_blank_tolerated() {
        let input = TuText {
            name: "T",
            edges: " 1 ,  2 \n2,1\n\n",
            graph_indicator: "1\n1\n\n",
            graph_labels: "0\n\n",
            node_labels: None,
        };
        let ds = parse_tu_text(&input).unwrap();
        assert_eq!(ds.graphs[0].edge_count(), 1);
    }

    #[test]
    fn node_index_out_of_range_reports_line() {
        let input = TuText {
            name: "T",
            edges: "1, 2\n2, 9\n",
            graph_indicator: "1\n1\n",
            graph_labels: "0\n",
            node_labels: None,
        };
        match parse_tu_text(&input) {
            Err(GraphError::NodeIndexOutOfRange { line, index, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(index, 9);
            }
            other => panic!("expected out-of-range error, got {other:?}"),
        }
    }

    #[test]
    fn node_labels_become_one_hot() {
        let input = TuText {
            name: "T",
            edges: "1, 2\n",
            graph_indicator: "1\n1\n",
            graph_labels: "0\n",
            node_labels: Some("7\n3\n"),
        };
        let ds = parse_tu_text(&input).unwrap();
        let f = ds.graphs[0].features();
        assert_eq!(f.shape(), (2, 2));
        // Labels {3, 7} relabel to {0, 1}; node 1 has raw label 7 → index 1.
        assert_eq!(f.row(0), &[0.0, 1.0]);
        assert_eq!(f.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn labels_relabel_to_contiguous() {
        let input = TuText {
            name: "T",
            edges: "1, 2\n3, 4\n5, 6\n",
            graph_indicator: "1\n1\n2\n2\n3\n3\n",
            graph_labels: "6\n-2\n6\n",
            node_labels: None,
        };
        let ds = parse_tu_text(&input).unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels(), vec![1, 0, 1]);
    }

    #[test]
    fn roundtrip_preserves_adjacency_and_labels() {
        let ds = parse_tu_text(&toy_input()).unwrap();
        let files = write_tu_text(&ds);
        let reparsed = parse_tu_text(&TuText {
            name: "TOY",
            edges: &files.edges,
            graph_indicator: &files.graph_indicator,
            graph_labels: &files.graph_labels,
            node_labels: files.node_labels.as_deref(),
        })
        .unwrap();
        assert_eq!(reparsed.len(), ds.len());
        for (a, b) in ds.graphs.iter().zip(reparsed.graphs.iter()) {
            assert_eq!(a.adjacency(), b.adjacency());
            assert_eq!(a.label(), b.label());
        }
    }

    #[test]
    fn roundtrip_with_node_labels() {
        let input = TuText {
            name: "T",
            edges: "1, 2\n2, 3\n",
            graph_indicator: "1\n1\n1\n",
            graph_labels: "4\n",
            node_labels: Some("2\n2\n5\n"),
        };
        let ds = parse_tu_text(&input).unwrap();
        let files = write_tu_text(&ds);
        assert!(files.node_labels.is_some());
        let reparsed = parse_tu_text(&TuText {
            name: "T",
            edges: &files.edges,
            graph_indicator: &files.graph_indicator,
            graph_labels: &files.graph_labels,
            node_labels: files.node_labels.as_deref(),
        })
        .unwrap();
        assert_eq!(
            reparsed.graphs[0].features(),
            ds.graphs[0].features()
        );
    }
}
