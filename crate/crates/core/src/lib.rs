//! Hierarchical graph classification with differentiable soft-cluster pooling.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] — dense 2-D matrices with tape-based reverse-mode
//!   automatic differentiation over the operation set the model needs.
//! * [`graph`] — graph/dataset types, TU-format text parsing, structural
//!   feature augmentation, padded batching, and stratified k-fold splits.
//! * [`gnn`] — GCN and GraphSAGE-mean message-passing layers and the
//!   K-layer module abstraction with batch/ℓ2 normalization.
//! * [`pool`] — the differentiable pooling layer: learned soft assignments,
//!   coarsening algebra, auxiliary losses, and a deterministic
//!   heavy-edge-matching variant.
//! * [`model`] — the full architecture (GNN blocks interleaved with pooling
//!   layers, readout, MLP classifier) and its permutation-invariance check.
//! * [`train`] — Adam, global-norm gradient clipping, early stopping, and
//!   cross-validation.
//! * [`synth`] — the planted-hierarchy synthetic benchmark generator.
//! * [`gradcheck`] — central finite-difference oracles used by tests and by
//!   the `gradcheck` CLI command.
//!
//! The crate is `no_std` (with `alloc`); everything that touches the file
//! system or the clock lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod gnn;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod pool;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::CoreError;
pub use tensor::{Mode, ParamStore, Parameter, Tape, Tensor, Var};
