//! Differentiable pooling: learned soft cluster assignments, the coarsening
//! algebra, auxiliary objectives, and a deterministic-clustering variant.
//!
//! One pooling layer holds two GNN modules over the same inputs: an
//! embedding GNN producing `Z`, and a pooling GNN whose row-softmaxed output
//! is the assignment `S` (rows sum to 1, one column per cluster). The layer
//! then coarsens:
//!
//! ```text
//! X' = Sᵀ Z        cluster features
//! A' = Sᵀ A S      cluster-to-cluster connectivity strengths
//! ```
//!
//! Two auxiliary objectives shape the assignment: a link-prediction term
//! `‖A − SSᵀ‖_F / n²` pulling nearby nodes into shared clusters, and the mean
//! row entropy of `S` pushing assignments toward one-hot. Both are emitted
//! per layer and added to the classification loss by the caller. Coarsened
//! adjacencies stay differentiable, so these losses also reach earlier
//! layers' assignments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, TensorError};
use crate::gnn::{normalized_operator, GnnModule};
use crate::tensor::{Mode, ParamStore, Tape, Tensor, Var};

/// How assignments are produced during the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentKind {
    /// Row-softmax over the pooling GNN's output.
    Learned,
    /// Hard clusters from greedy heavy-edge matching on the current
    /// adjacency; no gradient flows through the assignment.
    Deterministic,
}

/// One pooling layer: embedding GNN, pooling GNN, and loss switches.
#[derive(Clone, Debug)]
pub struct DiffPoolLayer {
    pub embed_gnn: GnnModule,
    /// Final output width is `n_clusters`.
    pub pool_gnn: GnnModule,
    pub n_clusters: usize,
    pub use_link_pred: bool,
    pub use_entropy: bool,
}

/// Everything one pooling layer produces.
#[derive(Clone, Copy, Debug)]
pub struct DiffPoolOutput {
    /// Node embeddings `Z` at this level (input to the pooling algebra and to
    /// the per-level readout).
    pub embeddings: Var,
    /// Row-stochastic assignment `S`, n×m.
    pub assignment: Var,
    /// `Sᵀ Z`, m×d.
    pub coarse_features: Var,
    /// `Sᵀ A S`, m×m; symmetric whenever `A` is.
    pub coarse_adjacency: Var,
    /// `‖A − SSᵀ‖_F / n²`, or a zero constant when disabled.
    pub link_pred_loss: Var,
    /// Mean row entropy of `S`, or a zero constant when disabled.
    pub entropy_loss: Var,
}

/// `S = row_softmax(pool_gnn(A, X))`; fully differentiable.
pub fn compute_assignment(
    layer: &DiffPoolLayer,
    store: &mut ParamStore,
    tape: &mut Tape,
    a: Var,
    x: Var,
    mode: Mode,
) -> Result<Var, TensorError> {
    let logits = layer.pool_gnn.forward(store, tape, a, x, mode)?;
    tape.row_softmax(logits)
}

fn check_rows_stochastic(tape: &Tape, s: Var, op: &'static str) -> Result<(), TensorError> {
    let vals = tape.values(s)?;
    let m = s.cols();
    for i in 0..s.rows() {
        let sum: f64 = vals[i * m..(i + 1) * m].iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(TensorError::RowSumViolation { op, row: i, sum });
        }
    }
    Ok(())
}

/// The coarsening algebra `(X', A') = (SᵀZ, SᵀAS)`. `S` rows must sum to 1.
pub fn pool(tape: &mut Tape, a: Var, z: Var, s: Var) -> Result<(Var, Var), TensorError> {
    if a.rows() != a.cols() || a.rows() != s.rows() || z.rows() != s.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "pool",
            left: a.shape(),
            right: s.shape(),
        });
    }
    check_rows_stochastic(tape, s, "pool")?;
    let st = tape.transpose(s)?;
    let coarse_features = tape.matmul(st, z)?;
    let mixed = tape.matmul(a, s)?;
    let coarse_adjacency = tape.matmul(st, mixed)?;
    Ok((coarse_features, coarse_adjacency))
}

/// `‖A − SSᵀ‖_F / n²`, differentiable through both inputs.
pub fn link_prediction_loss(tape: &mut Tape, a: Var, s: Var) -> Result<Var, TensorError> {
    if a.rows() != a.cols() || a.rows() != s.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "link_prediction_loss",
            left: a.shape(),
            right: s.shape(),
        });
    }
    let st = tape.transpose(s)?;
    let similarity = tape.matmul(s, st)?;
    let norm = tape.frobenius_diff_norm(a, similarity)?;
    let n = a.rows() as f64;
    tape.scale(norm, 1.0 / (n * n))
}

/// Mean row entropy of the assignment, in nats.
pub fn entropy_regularizer(tape: &mut Tape, s: Var) -> Result<Var, TensorError> {
    tape.row_entropy_mean(s)
}

/// Runs one pooling layer: embeddings, assignment, coarsening, and the
/// per-layer auxiliary losses (zero constants when disabled).
pub fn diffpool_forward(
    layer: &DiffPoolLayer,
    store: &mut ParamStore,
    tape: &mut Tape,
    a: Var,
    x: Var,
    mode: Mode,
    kind: AssignmentKind,
) -> Result<DiffPoolOutput, CoreError> {
    let norm = normalized_operator(tape, a, layer.embed_gnn.variant())?;
    let embeddings = layer
        .embed_gnn
        .forward_prenormalized(store, tape, norm, x, mode)?;
    let assignment = match kind {
        AssignmentKind::Learned => {
            let shared = if layer.pool_gnn.variant() == layer.embed_gnn.variant() {
                norm
            } else {
                normalized_operator(tape, a, layer.pool_gnn.variant())?
            };
            let logits = layer
                .pool_gnn
                .forward_prenormalized(store, tape, shared, x, mode)?;
            tape.row_softmax(logits)?
        }
        AssignmentKind::Deterministic => {
            let current = tape.value(a)?;
            let hard = deterministic_assignment(&current, layer.n_clusters)?;
            tape.constant(&hard)
        }
    };
    let (coarse_features, coarse_adjacency) = pool(tape, a, embeddings, assignment)?;
    let link_pred_loss = if layer.use_link_pred {
        link_prediction_loss(tape, a, assignment)?
    } else {
        tape.constant(&Tensor::zeros(1, 1))
    };
    let entropy_loss = if layer.use_entropy {
        entropy_regularizer(tape, assignment)?
    } else {
        tape.constant(&Tensor::zeros(1, 1))
    };
    Ok(DiffPoolOutput {
        embeddings,
        assignment,
        coarse_features,
        coarse_adjacency,
        link_pred_loss,
        entropy_loss,
    })
}

/// The fixed final-level assignment: every node into one cluster, so the
/// pooled features become the single graph embedding. Not learned.
pub fn readout_assignment(n: usize) -> Tensor {
    Tensor::ones(n, 1)
}

/// Hard 0/1 assignment from greedy heavy-edge matching, applied in rounds
/// until at most `m` clusters remain.
///
/// Each round lists inter-cluster weights, sorts pairs by weight (ties broken
/// by smallest member node index), and greedily matches disjoint pairs,
/// stopping the round once the target count is reached. Cluster weights are
/// re-accumulated from the original adjacency between rounds. When no
/// positive-weight pair remains but the count is still above `m`
/// (disconnected leftovers), the two smallest-index clusters merge.
pub fn deterministic_assignment(a: &Tensor, m: usize) -> Result<Tensor, CoreError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(CoreError::Tensor(TensorError::ShapeMismatch {
            op: "deterministic_assignment",
            left: a.shape(),
            right: (n, n),
        }));
    }
    if m < 1 {
        return Err(CoreError::Config(
            "deterministic assignment needs at least one cluster".into(),
        ));
    }
    if m > n {
        return Err(CoreError::Config(format!(
            "cannot form {m} clusters from {n} nodes"
        )));
    }

    // membership[u] = representative (smallest member) of u's cluster.
    let mut membership: Vec<usize> = (0..n).collect();
    loop {
        let mut reps: Vec<usize> = membership.clone();
        reps.sort_unstable();
        reps.dedup();
        let count = reps.len();
        if count <= m {
            break;
        }
        let index_of = |rep: usize| reps.binary_search(&rep).expect("rep present");

        // Cluster-to-cluster weights accumulated from the original matrix.
        let mut weights = vec![0.0f64; count * count];
        for u in 0..n {
            let cu = index_of(membership[u]);
            for v in 0..n {
                let w = a.get(u, v);
                if w != 0.0 {
                    let cv = index_of(membership[v]);
                    if cu != cv {
                        weights[cu * count + cv] += w;
                    }
                }
            }
        }

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..count {
            for j in (i + 1)..count {
                let w = weights[i * count + j];
                if w > 0.0 {
                    pairs.push((w, i, j));
                }
            }
        }
        // Heaviest first; ties by smallest member node index (cluster order
        // follows representative order).
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite weights")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut matched = vec![false; count];
        let mut merges: Vec<(usize, usize)> = Vec::new();
        for &(_, i, j) in &pairs {
            if matched[i] || matched[j] {
                continue;
            }
            matched[i] = true;
            matched[j] = true;
            merges.push((i, j));
            if count - merges.len() == m {
                break;
            }
        }
        if merges.is_empty() {
            // Disconnected leftovers: fold the two smallest-index clusters.
            merges.push((0, 1));
        }
        for &(i, j) in &merges {
            let (keep, drop) = (reps[i], reps[j]);
            for slot in membership.iter_mut() {
                if *slot == drop {
                    *slot = keep;
                }
            }
        }
    }

    let mut reps: Vec<usize> = membership.clone();
    reps.sort_unstable();
    reps.dedup();
    let mut s = Tensor::zeros(n, m);
    for u in 0..n {
        let col = reps.binary_search(&membership[u]).expect("rep present");
        s.set(u, col, 1.0);
    }
    Ok(s)
}
