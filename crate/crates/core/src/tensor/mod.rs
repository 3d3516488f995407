//! Dense 2-D matrices with tape-based reverse-mode automatic differentiation.
//!
//! [`Tensor`] is the plain value type (row-major `f64` storage with an
//! optional gradient slot). A [`Tape`] records a forward computation over
//! tensors and hands back lightweight [`Var`] handles; calling
//! [`Tape::backward`] on a scalar result fills gradients for every recorded
//! leaf that requires them. Trainable state lives in [`Parameter`]s collected
//! in a [`ParamStore`], which the tape can bind leaves to and write gradients
//! back into.
//!
//! Everything is 64-bit and dense: the graphs this crate targets have at most
//! a few hundred nodes, and gradient checking against finite differences
//! needs the headroom.

mod tape;

pub use tape::{Tape, Var};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;

/// Forward-pass mode, distinguishing how batch normalization behaves.
///
/// `Train` normalizes by batch statistics and updates the running
/// statistics. `Eval` normalizes by the stored running statistics. With
/// per-graph batches the running averages mix very different graphs, so
/// evaluation normally uses `BatchStats`: the current batch's statistics
/// without touching the stored ones (instance-normalization semantics,
/// deterministic and permutation-invariant per graph).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    BatchStats,
}

/// Dense row-major matrix of 64-bit values with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// Gradient of the same shape, filled in by [`Tape::backward`] for bound
    /// parameters.
    pub grad: Option<Vec<f64>>,
    /// Whether gradients should be tracked when this tensor enters a tape.
    pub requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            rows,
            cols,
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Tensor::from_vec(rows, cols, vec![1.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor::from_vec(rows, cols, data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Scalar contents of a 1×1 tensor.
    pub fn scalar(&self) -> Result<f64, TensorError> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry-wise difference to another tensor of the same
    /// shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Zeroes the gradient slot, allocating it if absent.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }
}

/// Named trainable tensor with Adam moment accumulators.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    /// The value; `requires_grad` is set and the gradient slot receives
    /// accumulated gradients after a backward pass.
    pub value: Tensor,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl Parameter {
    pub fn new(name: String, value: Tensor) -> Self {
        let len = value.data.len();
        Parameter {
            name,
            value: value.with_grad(),
            adam_m: vec![0.0; len],
            adam_v: vec![0.0; len],
        }
    }
}

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Handle to a non-trainable state buffer (e.g. batch-norm running
/// statistics) inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufId(pub usize);

/// Flat arena of parameters and state buffers owned by a model.
///
/// Layers hold `ParamId`/`BufId` indices rather than the values themselves,
/// which keeps optimizer steps, gradient clipping, and checkpointing simple
/// iterations over this store.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    buffers: Vec<(String, Vec<f64>)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add_param(&mut self, name: String, value: Tensor) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: String, data: Vec<f64>) -> BufId {
        self.buffers.push((name, data));
        BufId(self.buffers.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn buffer(&self, id: BufId) -> &[f64] {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufId) -> &mut Vec<f64> {
        &mut self.buffers[id.0].1
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.buffers.iter().map(|(n, d)| (n.as_str(), d.as_slice()))
    }

    /// Two distinct buffers borrowed mutably at once (batch norm needs its
    /// running mean and variance together).
    pub fn buffer_pair_mut(&mut self, a: BufId, b: BufId) -> (&mut Vec<f64>, &mut Vec<f64>) {
        assert_ne!(a.0, b.0);
        if a.0 < b.0 {
            let (lo, hi) = self.buffers.split_at_mut(b.0);
            (&mut lo[a.0].1, &mut hi[0].1)
        } else {
            let (lo, hi) = self.buffers.split_at_mut(a.0);
            (&mut hi[0].1, &mut lo[b.0].1)
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.value.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    /// Snapshot of all parameter values and buffers, for checkpoint restore
    /// during early stopping.
    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            params: self.params.iter().map(|p| p.value.data.clone()).collect(),
            buffers: self.buffers.iter().map(|(_, d)| d.clone()).collect(),
        }
    }

    pub fn restore(&mut self, snap: &StoreSnapshot) {
        assert_eq!(snap.params.len(), self.params.len());
        assert_eq!(snap.buffers.len(), self.buffers.len());
        for (p, saved) in self.params.iter_mut().zip(snap.params.iter()) {
            p.value.data.copy_from_slice(saved);
        }
        for ((_, d), saved) in self.buffers.iter_mut().zip(snap.buffers.iter()) {
            d.copy_from_slice(saved);
        }
    }
}

/// Saved parameter and buffer values from [`ParamStore::snapshot`].
#[derive(Clone, Debug)]
pub struct StoreSnapshot {
    params: Vec<Vec<f64>>,
    buffers: Vec<Vec<f64>>,
}
