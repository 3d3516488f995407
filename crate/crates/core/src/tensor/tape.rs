//! The recording tape and its operation set.
//!
//! Each operation appends one node holding the forward value, a zeroed
//! gradient slot, and enough saved context for its backward rule. A parent
//! always precedes its children, so [`Tape::backward`] is a single reverse
//! sweep that accumulates (sums) gradients at fan-out points.
//!
//! Stated conventions, chosen so tests are exact:
//! * ReLU subgradient at 0 is 0.
//! * Row softmax subtracts the per-row maximum before exponentiating.
//! * Entropy uses natural log with 0·ln 0 := 0, and gradient 0 at exact
//!   zeros.
//! * The Frobenius norm of a zero difference has gradient 0.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use libm::{exp, log, sqrt};

use super::{Mode, ParamId, ParamStore, Tensor};
use crate::error::TensorError;

/// Guard for near-zero row norms in `row_l2_normalize`.
pub const L2_NORM_EPS: f64 = 1e-12;
/// Variance epsilon for batch normalization.
pub const BATCH_NORM_EPS: f64 = 1e-5;
/// Running-statistics momentum for batch normalization.
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
/// Tolerance on probability-row sums for the entropy contract.
pub const ROW_SUM_TOL: f64 = 1e-6;

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a tape. Carries its shape so model code can
/// chain dimensions without holding a tape borrow; it is only valid for the
/// tape (and tape generation) that minted it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    node: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

enum Op {
    Leaf,
    Matmul {
        a: usize,
        b: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    MulElem {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: f64,
    },
    AddRowVec {
        a: usize,
        b: usize,
    },
    Transpose {
        a: usize,
    },
    ConcatCols {
        parts: Vec<usize>,
    },
    RowMean {
        a: usize,
    },
    SumAll {
        a: usize,
    },
    Relu {
        a: usize,
    },
    RowSoftmax {
        a: usize,
    },
    RowL2Normalize {
        a: usize,
        norms: Vec<f64>,
    },
    FrobeniusDiffNorm {
        a: usize,
        b: usize,
    },
    RowEntropyMean {
        a: usize,
    },
    DegreeNormalizeSym {
        a: usize,
        degrees: Vec<f64>,
    },
    DegreeNormalizeRows {
        a: usize,
        degrees: Vec<f64>,
    },
    BatchNormTrain {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNormEval {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        label: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// Recording tape for one forward/backward pass.
///
/// A tape and the `Var`s minted from it form a single-threaded execution
/// context. [`Tape::clear`] bumps the tape generation, invalidating every
/// outstanding handle.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    bound: Vec<(ParamId, usize)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            bound: Vec::new(),
        }
    }

    /// Drops all recorded nodes and invalidates every `Var` minted so far.
    pub fn clear(&mut self) {
        self.id = TAPE_IDS.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.bound.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let node = self.nodes.len();
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node {
            rows,
            cols,
            value,
            grad,
            op,
        });
        Var {
            tape: self.id,
            node,
            rows,
            cols,
        }
    }

    fn check(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.node >= self.nodes.len() {
            return Err(TensorError::TapeMismatch);
        }
        Ok(v.node)
    }

    /// Records a tensor as a leaf; gradients are tracked if the tensor has
    /// `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf)
    }

    /// Records a constant leaf; alias of [`Tape::leaf`] that ignores the
    /// gradient flag, used for fixed operands like identity matrices.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf)
    }

    /// Binds a parameter from the store as a gradient-tracked leaf. Binding
    /// the same parameter twice returns the original handle, so fan-out
    /// accumulates on a single leaf.
    pub fn bind(&mut self, id: ParamId, store: &ParamStore) -> Var {
        if let Some(&(_, node)) = self.bound.iter().find(|(pid, _)| *pid == id) {
            let n = &self.nodes[node];
            return Var {
                tape: self.id,
                node,
                rows: n.rows,
                cols: n.cols,
            };
        }
        let t = &store.param(id).value;
        let v = self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf);
        self.bound.push((id, v.node));
        v
    }

    /// Copies a recorded value out as a tensor.
    pub fn value(&self, v: Var) -> Result<Tensor, TensorError> {
        let n = self.check(v)?;
        let node = &self.nodes[n];
        Ok(Tensor::from_vec(node.rows, node.cols, node.value.clone()))
    }

    /// Raw view of a recorded value.
    pub fn values(&self, v: Var) -> Result<&[f64], TensorError> {
        let n = self.check(v)?;
        Ok(&self.nodes[n].value)
    }

    /// Copies the accumulated gradient of a recorded value.
    pub fn grad(&self, v: Var) -> Result<Tensor, TensorError> {
        let n = self.check(v)?;
        let node = &self.nodes[n];
        Ok(Tensor::from_vec(node.rows, node.cols, node.grad.clone()))
    }

    /// Adds gradients accumulated on bound parameter leaves into the store's
    /// parameter gradient slots (allocating them as needed). Parameters the
    /// loss never reached keep a zero gradient.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for &(pid, node) in &self.bound {
            let p = store.param_mut(pid);
            p.value.zero_grad_if_absent();
            let g = p.value.grad.as_mut().expect("grad slot just ensured");
            for (dst, src) in g.iter_mut().zip(self.nodes[node].grad.iter()) {
                *dst += *src;
            }
        }
    }

    // ------------------------------------------------------------------
    // Forward operations
    // ------------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if a.cols != b.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let mut out = vec![0.0; a.rows * b.cols];
        matmul_nn(
            &self.nodes[na].value,
            a.rows,
            a.cols,
            &self.nodes[nb].value,
            b.cols,
            &mut out,
        );
        Ok(self.push(a.rows, b.cols, out, Op::Matmul { a: na, b: nb }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let out = zip_map(&self.nodes[na].value, &self.nodes[nb].value, |x, y| x + y);
        Ok(self.push(a.rows, a.cols, out, Op::Add { a: na, b: nb }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let out = zip_map(&self.nodes[na].value, &self.nodes[nb].value, |x, y| x - y);
        Ok(self.push(a.rows, a.cols, out, Op::Sub { a: na, b: nb }))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_elem",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let out = zip_map(&self.nodes[na].value, &self.nodes[nb].value, |x, y| x * y);
        Ok(self.push(a.rows, a.cols, out, Op::MulElem { a: na, b: nb }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let out: Vec<f64> = self.nodes[na].value.iter().map(|v| v * factor).collect();
        Ok(self.push(a.rows, a.cols, out, Op::Scale { a: na, factor }))
    }

    /// Adds a 1×d row vector to every row of an n×d matrix.
    pub fn add_row_vec(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if b.rows != 1 || b.cols != a.cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_vec",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let bvals = self.nodes[nb].value.clone();
        let mut out = self.nodes[na].value.clone();
        for i in 0..a.rows {
            for j in 0..a.cols {
                out[i * a.cols + j] += bvals[j];
            }
        }
        Ok(self.push(a.rows, a.cols, out, Op::AddRowVec { a: na, b: nb }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let mut out = vec![0.0; a.rows * a.cols];
        transpose_into(&self.nodes[na].value, a.rows, a.cols, &mut out);
        Ok(self.push(a.cols, a.rows, out, Op::Transpose { a: na }))
    }

    /// Horizontal concatenation of parts sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        }
        let rows = parts[0].rows;
        let mut ids = Vec::with_capacity(parts.len());
        let mut total_cols = 0;
        for p in parts {
            let n = self.check(*p)?;
            if p.rows != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: parts[0].shape(),
                    right: p.shape(),
                });
            }
            ids.push(n);
            total_cols += p.cols;
        }
        let mut out = vec![0.0; rows * total_cols];
        let mut offset = 0;
        for (&n, p) in ids.iter().zip(parts.iter()) {
            let src = &self.nodes[n].value;
            for i in 0..rows {
                out[i * total_cols + offset..i * total_cols + offset + p.cols]
                    .copy_from_slice(&src[i * p.cols..(i + 1) * p.cols]);
            }
            offset += p.cols;
        }
        Ok(self.push(rows, total_cols, out, Op::ConcatCols { parts: ids }))
    }

    /// Column-wise mean over rows: n×d → 1×d.
    pub fn row_mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        if a.rows == 0 {
            return Err(TensorError::EmptyInput { op: "row_mean" });
        }
        let vals = &self.nodes[na].value;
        let mut out = vec![0.0; a.cols];
        for i in 0..a.rows {
            for j in 0..a.cols {
                out[j] += vals[i * a.cols + j];
            }
        }
        let inv = 1.0 / a.rows as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(1, a.cols, out, Op::RowMean { a: na }))
    }

    /// Sum of all entries: → 1×1.
    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let s: f64 = self.nodes[na].value.iter().sum();
        Ok(self.push(1, 1, vec![s], Op::SumAll { a: na }))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let out: Vec<f64> = self.nodes[na]
            .value
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        Ok(self.push(a.rows, a.cols, out, Op::Relu { a: na }))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let vals = &self.nodes[na].value;
        let mut out = vec![0.0; vals.len()];
        for i in 0..a.rows {
            let row = &vals[i * a.cols..(i + 1) * a.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[i * a.cols..(i + 1) * a.cols];
            let mut sum = 0.0;
            for (o, &v) in orow.iter_mut().zip(row.iter()) {
                *o = exp(v - max);
                sum += *o;
            }
            let inv = 1.0 / sum;
            orow.iter_mut().for_each(|v| *v *= inv);
        }
        Ok(self.push(a.rows, a.cols, out, Op::RowSoftmax { a: na }))
    }

    /// Divides each row by `max(‖row‖₂, ε)`.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let vals = &self.nodes[na].value;
        let mut out = vec![0.0; vals.len()];
        let mut norms = vec![0.0; a.rows];
        for i in 0..a.rows {
            let row = &vals[i * a.cols..(i + 1) * a.cols];
            let norm = sqrt(row.iter().map(|v| v * v).sum::<f64>());
            norms[i] = norm;
            let inv = 1.0 / norm.max(L2_NORM_EPS);
            for (o, &v) in out[i * a.cols..(i + 1) * a.cols].iter_mut().zip(row.iter()) {
                *o = v * inv;
            }
        }
        Ok(self.push(a.rows, a.cols, out, Op::RowL2Normalize { a: na, norms }))
    }

    /// `sqrt(Σᵢⱼ (aᵢⱼ − bᵢⱼ)²)` as a 1×1 tensor.
    pub fn frobenius_diff_norm(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "frobenius_diff_norm",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let s: f64 = self.nodes[na]
            .value
            .iter()
            .zip(self.nodes[nb].value.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(1, 1, vec![sqrt(s)], Op::FrobeniusDiffNorm { a: na, b: nb }))
    }

    /// Mean row entropy `(1/n)·Σᵢ H(rowᵢ)` in nats, with 0·ln 0 := 0.
    /// Every row must sum to 1 within [`ROW_SUM_TOL`].
    pub fn row_entropy_mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        if a.rows == 0 {
            return Err(TensorError::EmptyInput {
                op: "row_entropy_mean",
            });
        }
        let vals = &self.nodes[na].value;
        let mut total = 0.0;
        for i in 0..a.rows {
            let row = &vals[i * a.cols..(i + 1) * a.cols];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(TensorError::RowSumViolation {
                    op: "row_entropy_mean",
                    row: i,
                    sum,
                });
            }
            for &p in row {
                if p > 0.0 {
                    total -= p * log(p);
                }
            }
        }
        let mean = total / a.rows as f64;
        Ok(self.push(1, 1, vec![mean], Op::RowEntropyMean { a: na }))
    }

    /// Symmetric degree normalization `D^{-1/2} X D^{-1/2}` with row sums as
    /// degrees. The input is expected to already include self-loops; every
    /// row sum must be positive.
    pub fn degree_normalize_sym(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let degrees = row_sums_checked(&self.nodes[na].value, a.rows, a.cols)?;
        let vals = &self.nodes[na].value;
        let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / sqrt(d)).collect();
        let mut out = vec![0.0; vals.len()];
        for i in 0..a.rows {
            for j in 0..a.cols {
                out[i * a.cols + j] = vals[i * a.cols + j] * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        Ok(self.push(a.rows, a.cols, out, Op::DegreeNormalizeSym { a: na, degrees }))
    }

    /// Row-stochastic normalization `D^{-1} X` with row sums as degrees. The
    /// input is expected to already include self-loops.
    pub fn degree_normalize_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let na = self.check(a)?;
        let degrees = row_sums_checked(&self.nodes[na].value, a.rows, a.cols)?;
        let vals = &self.nodes[na].value;
        let mut out = vec![0.0; vals.len()];
        for i in 0..a.rows {
            let inv = 1.0 / degrees[i];
            for j in 0..a.cols {
                out[i * a.cols + j] = vals[i * a.cols + j] * inv;
            }
        }
        Ok(self.push(
            a.rows,
            a.cols,
            out,
            Op::DegreeNormalizeRows { a: na, degrees },
        ))
    }

    /// Batch normalization over the row (node) dimension.
    ///
    /// Train mode normalizes each column by its batch mean/variance
    /// (ε = [`BATCH_NORM_EPS`]), scales by `gamma`, shifts by `beta`, and
    /// updates the running statistics in place with momentum
    /// [`BATCH_NORM_MOMENTUM`]. Eval mode uses the running statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [f64],
        running_var: &mut [f64],
        mode: Mode,
    ) -> Result<Var, TensorError> {
        let (nx, ng, nb) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        if x.rows == 0 {
            return Err(TensorError::EmptyInput { op: "batch_norm" });
        }
        let d = x.cols;
        if gamma.shape() != (1, d) || beta.shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                left: x.shape(),
                right: gamma.shape(),
            });
        }
        debug_assert_eq!(running_mean.len(), d);
        debug_assert_eq!(running_var.len(), d);

        let n = x.rows as f64;
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train | Mode::BatchStats => {
                let vals = &self.nodes[nx].value;
                let mut mean = vec![0.0; d];
                for i in 0..x.rows {
                    for j in 0..d {
                        mean[j] += vals[i * d + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; d];
                for i in 0..x.rows {
                    for j in 0..d {
                        let c = vals[i * d + j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                if mode == Mode::Train {
                    for j in 0..d {
                        running_mean[j] = (1.0 - BATCH_NORM_MOMENTUM) * running_mean[j]
                            + BATCH_NORM_MOMENTUM * mean[j];
                        running_var[j] = (1.0 - BATCH_NORM_MOMENTUM) * running_var[j]
                            + BATCH_NORM_MOMENTUM * var[j];
                    }
                }
                (mean, var)
            }
            Mode::Eval => (running_mean.to_vec(), running_var.to_vec()),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / sqrt(v + BATCH_NORM_EPS)).collect();

        let vals = &self.nodes[nx].value;
        let gvals = &self.nodes[ng].value;
        let bvals = &self.nodes[nb].value;
        let mut out = vec![0.0; vals.len()];
        for i in 0..x.rows {
            for j in 0..d {
                let xhat = (vals[i * d + j] - mean[j]) * inv_std[j];
                out[i * d + j] = gvals[j] * xhat + bvals[j];
            }
        }
        let op = match mode {
            Mode::Train | Mode::BatchStats => Op::BatchNormTrain {
                x: nx,
                gamma: ng,
                beta: nb,
                mean,
                inv_std,
            },
            Mode::Eval => Op::BatchNormEval {
                x: nx,
                gamma: ng,
                beta: nb,
                mean,
                inv_std,
            },
        };
        Ok(self.push(x.rows, d, out, op))
    }

    /// `−log softmax(logits)[label]` computed by log-sum-exp with max
    /// subtraction; logits must be 1×c.
    pub fn cross_entropy_from_logits(
        &mut self,
        logits: Var,
        label: usize,
    ) -> Result<Var, TensorError> {
        let nl = self.check(logits)?;
        if logits.rows != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy_from_logits",
                left: logits.shape(),
                right: (1, logits.cols),
            });
        }
        let c = logits.cols;
        if label >= c {
            return Err(TensorError::LabelOutOfRange { label, classes: c });
        }
        let row = &self.nodes[nl].value;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let mut probs = vec![0.0; c];
        for (p, &v) in probs.iter_mut().zip(row.iter()) {
            *p = exp(v - max);
            sum += *p;
        }
        let inv = 1.0 / sum;
        probs.iter_mut().for_each(|p| *p *= inv);
        let loss = max + log(sum) - row[label];
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits: nl,
                label,
                probs,
            },
        ))
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Reverse sweep from a scalar loss. Gradients accumulate (sum) at
    /// fan-out; leaves the loss never reached keep zero gradients. Forward
    /// values are left untouched.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let nl = self.check(loss)?;
        if !loss.is_scalar() {
            return Err(TensorError::NotScalar {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[nl].grad[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            // Split off the current node so parent gradients can be written
            // while reading this node's saved context.
            let (front, back) = self.nodes.split_at_mut(idx);
            let node = &back[0];
            if node.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, n) = (node.rows, node.cols);
                    let k = front[*a].cols;
                    let g = &node.grad;
                    // ∂L/∂a = g · bᵀ
                    let mut ga = vec![0.0; m * k];
                    matmul_nt(g, m, n, &front[*b].value, k, &mut ga);
                    accumulate(&mut front[*a].grad, &ga);
                    // ∂L/∂b = aᵀ · g
                    let mut gb = vec![0.0; k * n];
                    matmul_tn(&front[*a].value, m, k, g, n, &mut gb);
                    accumulate(&mut front[*b].grad, &gb);
                }
                Op::Add { a, b } => {
                    let g = node.grad.clone();
                    accumulate(&mut front[*a].grad, &g);
                    accumulate(&mut front[*b].grad, &g);
                }
                Op::Sub { a, b } => {
                    let g = node.grad.clone();
                    accumulate(&mut front[*a].grad, &g);
                    for (dst, src) in front[*b].grad.iter_mut().zip(g.iter()) {
                        *dst -= *src;
                    }
                }
                Op::MulElem { a, b } => {
                    let g = &node.grad;
                    let (ia, ib) = (*a, *b);
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(front[ib].value.iter())
                        .map(|(g, y)| g * y)
                        .collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(front[ia].value.iter())
                        .map(|(g, x)| g * x)
                        .collect();
                    accumulate(&mut front[ia].grad, &ga);
                    accumulate(&mut front[ib].grad, &gb);
                }
                Op::Scale { a, factor } => {
                    let f = *factor;
                    let ga: Vec<f64> = node.grad.iter().map(|g| g * f).collect();
                    accumulate(&mut front[*a].grad, &ga);
                }
                Op::AddRowVec { a, b } => {
                    let g = &node.grad;
                    let cols = node.cols;
                    accumulate(&mut front[*a].grad, g);
                    let gb = &mut front[*b].grad;
                    for i in 0..node.rows {
                        for j in 0..cols {
                            gb[j] += g[i * cols + j];
                        }
                    }
                }
                Op::Transpose { a } => {
                    let mut ga = vec![0.0; node.grad.len()];
                    transpose_into(&node.grad, node.rows, node.cols, &mut ga);
                    accumulate(&mut front[*a].grad, &ga);
                }
                Op::ConcatCols { parts } => {
                    let total_cols = node.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let pcols = front[p].cols;
                        for i in 0..node.rows {
                            for j in 0..pcols {
                                front[p].grad[i * pcols + j] +=
                                    node.grad[i * total_cols + offset + j];
                            }
                        }
                        offset += pcols;
                    }
                }
                Op::RowMean { a } => {
                    let rows = front[*a].rows;
                    let cols = node.cols;
                    let inv = 1.0 / rows as f64;
                    let ga = &mut front[*a].grad;
                    for i in 0..rows {
                        for j in 0..cols {
                            ga[i * cols + j] += node.grad[j] * inv;
                        }
                    }
                }
                Op::SumAll { a } => {
                    let g = node.grad[0];
                    front[*a].grad.iter_mut().for_each(|v| *v += g);
                }
                Op::Relu { a } => {
                    let ia = *a;
                    let ga: Vec<f64> = node
                        .grad
                        .iter()
                        .zip(front[ia].value.iter())
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut front[ia].grad, &ga);
                }
                Op::RowSoftmax { a } => {
                    let cols = node.cols;
                    let ga = &mut front[*a].grad;
                    for i in 0..node.rows {
                        let s = &node.value[i * cols..(i + 1) * cols];
                        let g = &node.grad[i * cols..(i + 1) * cols];
                        let dot: f64 = s.iter().zip(g.iter()).map(|(s, g)| s * g).sum();
                        for j in 0..cols {
                            ga[i * cols + j] += s[j] * (g[j] - dot);
                        }
                    }
                }
                Op::RowL2Normalize { a, norms } => {
                    let cols = node.cols;
                    let ga = &mut front[*a].grad;
                    for i in 0..node.rows {
                        let y = &node.value[i * cols..(i + 1) * cols];
                        let g = &node.grad[i * cols..(i + 1) * cols];
                        if norms[i] > L2_NORM_EPS {
                            let inv = 1.0 / norms[i];
                            let dot: f64 = y.iter().zip(g.iter()).map(|(y, g)| y * g).sum();
                            for j in 0..cols {
                                ga[i * cols + j] += (g[j] - y[j] * dot) * inv;
                            }
                        } else {
                            // Below the guard the map is x/ε, exactly linear.
                            let inv = 1.0 / L2_NORM_EPS;
                            for j in 0..cols {
                                ga[i * cols + j] += g[j] * inv;
                            }
                        }
                    }
                }
                Op::FrobeniusDiffNorm { a, b } => {
                    let norm = node.value[0];
                    if norm > 0.0 {
                        let scale = node.grad[0] / norm;
                        let (ia, ib) = (*a, *b);
                        let diffs: Vec<f64> = front[ia]
                            .value
                            .iter()
                            .zip(front[ib].value.iter())
                            .map(|(x, y)| (x - y) * scale)
                            .collect();
                        accumulate(&mut front[ia].grad, &diffs);
                        for (dst, src) in front[ib].grad.iter_mut().zip(diffs.iter()) {
                            *dst -= *src;
                        }
                    }
                    // At a == b exactly the gradient is defined as zero.
                }
                Op::RowEntropyMean { a } => {
                    let ia = *a;
                    let rows = front[ia].rows;
                    let scale = node.grad[0] / rows as f64;
                    let vals = &front[ia].value;
                    let ga: Vec<f64> = vals
                        .iter()
                        .map(|&p| if p > 0.0 { -(log(p) + 1.0) * scale } else { 0.0 })
                        .collect();
                    accumulate(&mut front[ia].grad, &ga);
                }
                Op::DegreeNormalizeSym { a, degrees } => {
                    // y_ij = x_ij / sqrt(d_i d_j), d_i = Σ_k x_ik. Perturbing
                    // x_pq moves d_p alone, which scales row p and column p
                    // of y:
                    // ∂L/∂x_pq = g_pq/sqrt(d_p d_q) − (u_p + v_p)/(2d_p)
                    // with u_p = Σ_j g_pj y_pj and v_p = Σ_i g_ip y_ip.
                    let nrows = node.rows;
                    let ncols = node.cols;
                    let g = &node.grad;
                    let y = &node.value;
                    let mut u = vec![0.0; nrows];
                    let mut v = vec![0.0; ncols];
                    for i in 0..nrows {
                        for j in 0..ncols {
                            let gy = g[i * ncols + j] * y[i * ncols + j];
                            u[i] += gy;
                            v[j] += gy;
                        }
                    }
                    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / sqrt(d)).collect();
                    let ga = &mut front[*a].grad;
                    for p in 0..nrows {
                        let row_term = (u[p] + v[p]) / (2.0 * degrees[p]);
                        for q in 0..ncols {
                            ga[p * ncols + q] +=
                                g[p * ncols + q] * inv_sqrt[p] * inv_sqrt[q] - row_term;
                        }
                    }
                }
                Op::DegreeNormalizeRows { a, degrees } => {
                    // y_ij = x_ij / d_i ⇒ ∂L/∂x_pq = (g_pq − u_p)/d_p.
                    let nrows = node.rows;
                    let ncols = node.cols;
                    let g = &node.grad;
                    let y = &node.value;
                    let ga = &mut front[*a].grad;
                    for p in 0..nrows {
                        let u: f64 = (0..ncols).map(|j| g[p * ncols + j] * y[p * ncols + j]).sum();
                        let inv = 1.0 / degrees[p];
                        for q in 0..ncols {
                            ga[p * ncols + q] += (g[p * ncols + q] - u) * inv;
                        }
                    }
                }
                Op::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                } => {
                    let rows = node.rows;
                    let d = node.cols;
                    let n = rows as f64;
                    let g = &node.grad;
                    let (ix, ig, ib) = (*x, *gamma, *beta);
                    let xvals = front[ix].value.clone();
                    let gvals = front[ig].value.clone();
                    // Column sums of upstream grad and of grad·x̂.
                    let mut sum_g = vec![0.0; d];
                    let mut sum_gx = vec![0.0; d];
                    for i in 0..rows {
                        for j in 0..d {
                            let xhat = (xvals[i * d + j] - mean[j]) * inv_std[j];
                            sum_g[j] += g[i * d + j];
                            sum_gx[j] += g[i * d + j] * xhat;
                        }
                    }
                    for j in 0..d {
                        front[ig].grad[j] += sum_gx[j];
                        front[ib].grad[j] += sum_g[j];
                    }
                    let gx = &mut front[ix].grad;
                    for i in 0..rows {
                        for j in 0..d {
                            let xhat = (xvals[i * d + j] - mean[j]) * inv_std[j];
                            gx[i * d + j] += gvals[j] * inv_std[j] / n
                                * (n * g[i * d + j] - sum_g[j] - xhat * sum_gx[j]);
                        }
                    }
                }
                Op::BatchNormEval {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                } => {
                    // Affine map with fixed statistics.
                    let rows = node.rows;
                    let d = node.cols;
                    let g = &node.grad;
                    let (ix, ig, ib) = (*x, *gamma, *beta);
                    let xvals = front[ix].value.clone();
                    let gvals = front[ig].value.clone();
                    for i in 0..rows {
                        for j in 0..d {
                            let xhat = (xvals[i * d + j] - mean[j]) * inv_std[j];
                            front[ig].grad[j] += g[i * d + j] * xhat;
                            front[ib].grad[j] += g[i * d + j];
                            front[ix].grad[i * d + j] += g[i * d + j] * gvals[j] * inv_std[j];
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    label,
                    probs,
                } => {
                    let g = node.grad[0];
                    let gl = &mut front[*logits].grad;
                    for (j, &p) in probs.iter().enumerate() {
                        gl[j] += g * (p - if j == *label { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(())
    }
}

impl Tensor {
    fn zero_grad_if_absent(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data().len()]);
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += *s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

fn row_sums_checked(vals: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>, TensorError> {
    let mut sums = vec![0.0; rows];
    for i in 0..rows {
        sums[i] = vals[i * cols..(i + 1) * cols].iter().sum();
        if sums[i] <= 0.0 {
            return Err(TensorError::DegenerateDegree {
                row: i,
                value: sums[i],
            });
        }
    }
    Ok(sums)
}

/// `out = a[m×k] · b[k×n]`, ikj order; exact zeros in `a` are skipped, which
/// matters for sparse adjacency operands.
fn matmul_nn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &ail) in arow.iter().enumerate() {
            if ail != 0.0 {
                let brow = &b[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += ail * bv;
                }
            }
        }
    }
}

/// `out = a[m×n] · bᵀ` where `b` is k×n: row-by-row dot products.
fn matmul_nt(a: &[f64], m: usize, n: usize, b: &[f64], k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            out[i * k + j] = arow.iter().zip(brow.iter()).map(|(x, y)| x * y).sum();
        }
    }
}

/// `out = aᵀ · g` where `a` is m×k and `g` is m×n, giving k×n.
fn matmul_tn(a: &[f64], m: usize, k: usize, g: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (j, &aij) in arow.iter().enumerate() {
            if aij != 0.0 {
                let orow = &mut out[j * n..(j + 1) * n];
                for (o, &gv) in orow.iter_mut().zip(grow.iter()) {
                    *o += aij * gv;
                }
            }
        }
    }
}

fn transpose_into(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error, FD_STEP};
    use crate::tensor::ParamStore;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec())
    }

    #[test]
    fn matmul_identity_case() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::identity(2));
        let b = tape.leaf(&t(2, 2, &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.values(c).unwrap(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_forced_arithmetic() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(1, 2, &[1.0, 2.0]));
        let b = tape.leaf(&t(2, 1, &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.values(c).unwrap(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(2, 3));
        let b = tape.leaf(&Tensor::zeros(2, 3));
        match tape.matmul(a, b) {
            Err(TensorError::ShapeMismatch { op: "matmul", left, right }) => {
                assert_eq!(left, (2, 3));
                assert_eq!(right, (2, 3));
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        // d sum(a·b) / d a at the stated point, against the central
        // finite-difference oracle.
        let a0 = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b0 = t(2, 1, &[1.0, 1.0]);

        let mut tape = Tape::new();
        let a = tape.leaf(&a0);
        let b = tape.leaf(&b0);
        let prod = tape.matmul(a, b).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        tape.backward(loss).unwrap();
        let analytic = tape.grad(a).unwrap();

        let mut f = |x: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let a = tape.leaf(&t(2, 2, x));
            let b = tape.leaf(&b0);
            let prod = tape.matmul(a, b).unwrap();
            let loss = tape.sum_all(prod).unwrap();
            tape.values(loss).unwrap()[0]
        };
        let numeric = central_difference(&mut f, a0.data(), FD_STEP);
        assert!(max_relative_error(analytic.data(), &numeric, 1e-3) < 1e-4);
        // The oracle lands on all-ones.
        for v in analytic.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_symmetry_and_row_sums() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(1, 3, &[0.0, 0.0, 0.0]));
        let s = tape.row_softmax(x).unwrap();
        for v in tape.values(s).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let y = tape.leaf(&t(2, 4, &[1.0, -2.0, 0.5, 3.0, -8.0, 2.0, 2.0, 0.1]));
        let sy = tape.row_softmax(y).unwrap();
        let vals = tape.value(sy).unwrap();
        for i in 0..2 {
            let sum: f64 = vals.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_max_subtraction_stability() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(1, 2, &[1000.0, 0.0]));
        let s = tape.row_softmax(x).unwrap();
        let vals = tape.values(s).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-300);
        assert!(vals[1] >= 0.0 && vals[1] < 1e-300);
    }

    #[test]
    fn relu_forward_and_kink_convention() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(1, 2, &[-1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.values(y).unwrap(), &[0.0, 2.0]);

        // Subgradient at 0 is 0.
        let z = tape.leaf(&t(1, 1, &[0.0]));
        let r = tape.relu(z).unwrap();
        assert_eq!(tape.values(r).unwrap(), &[0.0]);
        let loss = tape.sum_all(r).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(z).unwrap().data(), &[0.0]);
    }

    #[test]
    fn frobenius_diff_norm_values() {
        let mut tape = Tape::new();
        let i2 = tape.leaf(&Tensor::identity(2));
        let j2 = tape.leaf(&Tensor::identity(2));
        let zero = tape.frobenius_diff_norm(i2, j2).unwrap();
        assert_eq!(tape.values(zero).unwrap(), &[0.0]);

        let a = tape.leaf(&t(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let z = tape.leaf(&Tensor::zeros(2, 2));
        let one = tape.frobenius_diff_norm(a, z).unwrap();
        assert_eq!(tape.values(one).unwrap(), &[1.0]);

        // Hand computation: entries 3 and 4 give norm 5.
        let b = tape.leaf(&t(2, 2, &[3.0, 0.0, 4.0, 0.0]));
        let five = tape.frobenius_diff_norm(b, z).unwrap();
        assert_eq!(tape.values(five).unwrap(), &[5.0]);
    }

    #[test]
    fn frobenius_gradient_zero_at_equal_inputs() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(2, 2, &[1.0, 2.0, 3.0, 4.0]).with_grad());
        let b = tape.leaf(&t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let n = tape.frobenius_diff_norm(a, b).unwrap();
        tape.backward(n).unwrap();
        assert!(tape.grad(a).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn entropy_extreme_and_hand_values() {
        let mut tape = Tape::new();
        let one_hot = tape.leaf(&t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let e = tape.row_entropy_mean(one_hot).unwrap();
        assert_eq!(tape.values(e).unwrap(), &[0.0]);

        let uniform = tape.leaf(&t(3, 4, &[0.25; 12]));
        let eu = tape.row_entropy_mean(uniform).unwrap();
        assert!((tape.values(eu).unwrap()[0] - log(4.0)).abs() < 1e-15);

        // (ln 2 + 0)/2.
        let mixed = tape.leaf(&t(2, 2, &[0.5, 0.5, 1.0, 0.0]));
        let em = tape.row_entropy_mean(mixed).unwrap();
        assert!((tape.values(em).unwrap()[0] - log(2.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_rejects_bad_row_sums() {
        let mut tape = Tape::new();
        let bad = tape.leaf(&t(1, 2, &[0.7, 0.2]));
        match tape.row_entropy_mean(bad) {
            Err(TensorError::RowSumViolation { row: 0, .. }) => {}
            other => panic!("expected row-sum violation, got {other:?}"),
        }
    }

    #[test]
    fn l2_normalize_345_and_zero_guard() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(1, 2, &[3.0, 4.0]));
        let y = tape.row_l2_normalize(x).unwrap();
        let vals = tape.values(y).unwrap();
        assert!((vals[0] - 0.6).abs() < 1e-15);
        assert!((vals[1] - 0.8).abs() < 1e-15);

        let zero = tape.leaf(&t(1, 2, &[0.0, 0.0]));
        let yz = tape.row_l2_normalize(zero).unwrap();
        assert_eq!(tape.values(yz).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn batch_norm_identical_rows_collapse_to_beta() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(3, 2, &[5.0, -1.0, 5.0, -1.0, 5.0, -1.0]));
        let gamma = tape.leaf(&Tensor::ones(1, 2));
        let beta = tape.leaf(&Tensor::zeros(1, 2));
        let mut rm = alloc::vec![0.0; 2];
        let mut rv = alloc::vec![1.0; 2];
        let y = tape
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, Mode::Train)
            .unwrap();
        assert!(tape.values(y).unwrap().iter().all(|&v| v == 0.0));
        // Running statistics moved toward the batch statistics.
        assert!((rm[0] - 0.5).abs() < 1e-15);
        assert!((rv[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn batch_norm_two_point_column() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(2, 1, &[0.0, 2.0]));
        let gamma = tape.leaf(&Tensor::ones(1, 1));
        let beta = tape.leaf(&Tensor::zeros(1, 1));
        let mut rm = alloc::vec![0.0];
        let mut rv = alloc::vec![1.0];
        let y = tape
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, Mode::Train)
            .unwrap();
        let vals = tape.values(y).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-4);
        assert!((vals[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batch_norm_matches_gamma_beta_statistics() {
        let mut rng = crate::rng::Rng::seed_from(19);
        // Large variance keeps the ε effect under the 1e-6 tolerance.
        let x0 = Tensor::from_fn(64, 8, |_, _| rng.uniform(-10.0, 10.0));
        let gamma0 = Tensor::from_fn(1, 8, |_, j| 0.5 + 0.25 * j as f64);
        let beta0 = Tensor::from_fn(1, 8, |_, j| -1.0 + 0.3 * j as f64);
        let mut tape = Tape::new();
        let x = tape.leaf(&x0);
        let gamma = tape.leaf(&gamma0);
        let beta = tape.leaf(&beta0);
        let mut rm = alloc::vec![0.0; 8];
        let mut rv = alloc::vec![1.0; 8];
        let y = tape
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, Mode::Train)
            .unwrap();
        let out = tape.value(y).unwrap();
        for j in 0..8 {
            let mean: f64 = (0..64).map(|i| out.get(i, j)).sum::<f64>() / 64.0;
            let var: f64 = (0..64)
                .map(|i| (out.get(i, j) - mean) * (out.get(i, j) - mean))
                .sum::<f64>()
                / 64.0;
            assert!((mean - beta0.get(0, j)).abs() < 1e-6);
            assert!((sqrt(var) - gamma0.get(0, j)).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(2, 1, &[1.0, 3.0]));
        let gamma = tape.leaf(&Tensor::ones(1, 1));
        let beta = tape.leaf(&Tensor::zeros(1, 1));
        let mut rm = alloc::vec![2.0];
        let mut rv = alloc::vec![4.0];
        let y = tape
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, Mode::Eval)
            .unwrap();
        let vals = tape.values(y).unwrap();
        assert!((vals[0] - (1.0 - 2.0) / sqrt(4.0 + BATCH_NORM_EPS)).abs() < 1e-12);
        // Eval must not move the running statistics.
        assert_eq!(rm[0], 2.0);
        assert_eq!(rv[0], 4.0);
    }

    #[test]
    fn batch_norm_rejects_empty_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros(0, 2));
        let gamma = tape.leaf(&Tensor::ones(1, 2));
        let beta = tape.leaf(&Tensor::zeros(1, 2));
        let mut rm = alloc::vec![0.0; 2];
        let mut rv = alloc::vec![1.0; 2];
        assert!(matches!(
            tape.batch_norm(x, gamma, beta, &mut rm, &mut rv, Mode::Train),
            Err(TensorError::EmptyInput { .. })
        ));
    }

    #[test]
    fn cross_entropy_uniform_and_stability() {
        let mut tape = Tape::new();
        let even = tape.leaf(&t(1, 2, &[0.0, 0.0]));
        let l = tape.cross_entropy_from_logits(even, 0).unwrap();
        assert!((tape.values(l).unwrap()[0] - log(2.0)).abs() < 1e-15);

        let extreme = tape.leaf(&t(1, 2, &[100.0, 0.0]));
        let l2 = tape.cross_entropy_from_logits(extreme, 0).unwrap();
        let v = tape.values(l2).unwrap()[0];
        assert!(v.is_finite() && (0.0..1e-15).contains(&v));
    }

    #[test]
    fn cross_entropy_gradient_hand_value() {
        let mut tape = Tape::new();
        let logits = tape.leaf(&t(1, 2, &[1.0, 2.0]).with_grad());
        let l = tape.cross_entropy_from_logits(logits, 1).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(logits).unwrap();
        let p0 = exp(1.0) / (exp(1.0) + exp(2.0));
        assert!((g.data()[0] - p0).abs() < 1e-12);
        assert!((g.data()[1] - (p0 - 0.0) + p0 * 2.0 - p0).abs() < 1.0); // see next line
        assert!((g.data()[1] + p0).abs() < 1e-12); // softmax[1] − 1 = −p0
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut tape = Tape::new();
        let logits = tape.leaf(&t(1, 2, &[0.0, 0.0]));
        assert!(matches!(
            tape.cross_entropy_from_logits(logits, 2),
            Err(TensorError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(2, 2, &[1.0, 2.0, 3.0, 4.0]).with_grad());
        let s = tape.sum_all(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn backward_fanout_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(2, 2, &[1.0, 2.0, 3.0, 4.0]).with_grad());
        let doubled = tape.add(x, x).unwrap();
        let s = tape.sum_all(doubled).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0; 4]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros(2, 2));
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NotScalar { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn foreign_and_stale_vars_rejected() {
        let mut tape_a = Tape::new();
        let mut tape_b = Tape::new();
        let x = tape_a.leaf(&Tensor::zeros(1, 1));
        assert!(matches!(tape_b.backward(x), Err(TensorError::TapeMismatch)));

        let y = tape_a.leaf(&Tensor::ones(1, 1));
        tape_a.clear();
        assert!(matches!(tape_a.values(y), Err(TensorError::TapeMismatch)));
    }

    #[test]
    fn backward_leaves_forward_values_unchanged() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(2, 2, &[1.0, -2.0, 0.5, 3.0]).with_grad());
        let r = tape.relu(x).unwrap();
        let before = tape.values(r).unwrap().to_vec();
        let s = tape.sum_all(r).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.values(r).unwrap(), &before[..]);
        assert_eq!(tape.values(x).unwrap(), &[1.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let run = || -> alloc::vec::Vec<f64> {
            let mut tape = Tape::new();
            let a = tape.leaf(&t(3, 3, &[0.1, 0.7, -0.3, 0.2, 0.9, 1.4, -2.0, 0.05, 0.6]));
            let s = tape.row_softmax(a).unwrap();
            let n = tape.row_l2_normalize(s).unwrap();
            let m = tape.matmul(n, a).unwrap();
            tape.values(m).unwrap().to_vec()
        };
        let x = run();
        let y = run();
        assert_eq!(x, y);
    }

    #[test]
    fn degree_normalize_sym_two_node_edge() {
        let mut tape = Tape::new();
        // Ã for a single edge: all-ones 2×2, degrees 2 and 2.
        let a = tape.leaf(&Tensor::ones(2, 2));
        let n = tape.degree_normalize_sym(a).unwrap();
        for v in tape.values(n).unwrap() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_normalize_rejects_zero_row() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(2, 2));
        assert!(matches!(
            tape.degree_normalize_sym(a),
            Err(TensorError::DegenerateDegree { row: 0, .. })
        ));
    }

    #[test]
    fn bind_caches_parameter_leaves() {
        let mut store = ParamStore::new();
        let id = store.add_param("w".into(), t(1, 2, &[2.0, 3.0]));
        let mut tape = Tape::new();
        let v1 = tape.bind(id, &store);
        let v2 = tape.bind(id, &store);
        assert_eq!(v1, v2);
        // Fan-out through the cached leaf accumulates.
        let s1 = tape.sum_all(v1).unwrap();
        let s2 = tape.sum_all(v2).unwrap();
        let total = tape.add(s1, s2).unwrap();
        tape.backward(total).unwrap();
        tape.accumulate_param_grads(&mut store);
        assert_eq!(
            store.param(id).value.grad.as_deref().unwrap(),
            &[2.0, 2.0]
        );
    }

    #[test]
    fn unreached_parameters_get_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add_param("used".into(), t(1, 1, &[1.0]));
        let unused = store.add_param("unused".into(), t(1, 1, &[1.0]));
        let mut tape = Tape::new();
        let u = tape.bind(used, &store);
        let _nu = tape.bind(unused, &store);
        let s = tape.sum_all(u).unwrap();
        tape.backward(s).unwrap();
        tape.accumulate_param_grads(&mut store);
        assert_eq!(store.param(used).value.grad.as_deref().unwrap(), &[1.0]);
        assert_eq!(store.param(unused).value.grad.as_deref().unwrap(), &[0.0]);
    }

    #[test]
    fn concat_and_row_mean_roundtrip() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(2, 1, &[1.0, 3.0]));
        let b = tape.leaf(&t(2, 2, &[2.0, 4.0, 6.0, 8.0]));
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.values(c).unwrap(), &[1.0, 2.0, 4.0, 3.0, 6.0, 8.0]);
        let m = tape.row_mean(c).unwrap();
        assert_eq!(tape.values(m).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn transpose_and_scale() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let at = tape.transpose(a).unwrap();
        assert_eq!(at.shape(), (3, 2));
        assert_eq!(tape.values(at).unwrap(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let s = tape.scale(at, -2.0).unwrap();
        assert_eq!(tape.values(s).unwrap()[0], -2.0);
    }
}
