//! Message-passing building blocks.
//!
//! Two propagation rules over `Ã = A + I`:
//!
//! * GCN: `ReLU(D̃^{-1/2} Ã D̃^{-1/2} H W + bias)` with `D̃ᵢᵢ = Σⱼ Ãᵢⱼ`;
//! * GraphSAGE-mean: `ReLU(D̃^{-1} Ã H W + bias)`, i.e. the mean over a
//!   node's own and neighbors' embeddings (self-inclusion keeps isolated
//!   nodes well-defined).
//!
//! Weighted adjacencies from coarsened levels are used as-is: the operator
//! performs its own normalization, and the weighted degrees stay positive
//! because the self-loop contributes at least 1. Propagation is
//! differentiable through the adjacency, which matters at coarsened levels
//! where it depends on earlier assignments.
//!
//! A [`GnnModule`] stacks K layers, applying batch normalization and then
//! row-wise ℓ2 normalization after each when enabled.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::TensorError;
use crate::rng::Rng;
use crate::tensor::{BufId, Mode, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnnVariant {
    Gcn,
    GraphsageMean,
}

/// Batch-norm parameter and running-statistics handles.
#[derive(Clone, Copy, Debug)]
pub struct BnIds {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufId,
    pub running_var: BufId,
}

/// One message-passing layer: weight, bias, optional batch norm.
#[derive(Clone, Debug)]
pub struct GnnLayerParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub bn: Option<BnIds>,
    pub variant: GnnVariant,
    pub d_in: usize,
    pub d_out: usize,
}

impl GnnLayerParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        variant: GnnVariant,
        d_in: usize,
        d_out: usize,
        with_bn: bool,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / sqrt(d_in as f64);
        let weight = store.add_param(
            format!("{prefix}.weight"),
            Tensor::from_fn(d_in, d_out, |_, _| rng.uniform(-bound, bound)),
        );
        // Symmetric bias init keeps ReLU units alive on the nonnegative
        // inputs common here (degrees, one-hot labels).
        let bias = store.add_param(
            format!("{prefix}.bias"),
            Tensor::from_fn(1, d_out, |_, _| rng.uniform(-bound, bound)),
        );
        let bn = with_bn.then(|| BnIds {
            gamma: store.add_param(format!("{prefix}.bn.gamma"), Tensor::ones(1, d_out)),
            beta: store.add_param(format!("{prefix}.bn.beta"), Tensor::zeros(1, d_out)),
            running_mean: store.add_buffer(format!("{prefix}.bn.running_mean"), vec![0.0; d_out]),
            running_var: store.add_buffer(format!("{prefix}.bn.running_var"), vec![1.0; d_out]),
        });
        GnnLayerParams {
            weight,
            bias,
            bn,
            variant,
            d_in,
            d_out,
        }
    }
}

/// The degree-normalized propagation operator for a raw adjacency: adds
/// self-loops, then normalizes symmetrically (GCN) or row-stochastically
/// (GraphSAGE-mean).
pub fn normalized_operator(tape: &mut Tape, a: Var, variant: GnnVariant) -> Result<Var, TensorError> {
    let identity = tape.constant(&Tensor::identity(a.rows()));
    let with_loops = tape.add(a, identity)?;
    match variant {
        GnnVariant::Gcn => tape.degree_normalize_sym(with_loops),
        GnnVariant::GraphsageMean => tape.degree_normalize_rows(with_loops),
    }
}

/// One propagation step given a pre-normalized operator:
/// `norm · H · W + bias`, with ReLU when `activate` is set.
fn propagate(
    store: &ParamStore,
    tape: &mut Tape,
    norm: Var,
    h: Var,
    layer: &GnnLayerParams,
    activate: bool,
) -> Result<Var, TensorError> {
    let w = tape.bind(layer.weight, store);
    let b = tape.bind(layer.bias, store);
    let mixed = tape.matmul(norm, h)?;
    let projected = tape.matmul(mixed, w)?;
    let shifted = tape.add_row_vec(projected, b)?;
    if activate {
        tape.relu(shifted)
    } else {
        Ok(shifted)
    }
}

/// GCN propagation: `ReLU(D̃^{-1/2} Ã D̃^{-1/2} H W + bias)`.
pub fn gcn_layer(
    store: &ParamStore,
    tape: &mut Tape,
    a: Var,
    h: Var,
    layer: &GnnLayerParams,
) -> Result<Var, TensorError> {
    let norm = normalized_operator(tape, a, GnnVariant::Gcn)?;
    propagate(store, tape, norm, h, layer, true)
}

/// GraphSAGE-mean propagation: `ReLU(D̃^{-1} Ã H W + bias)`.
pub fn graphsage_mean_layer(
    store: &ParamStore,
    tape: &mut Tape,
    a: Var,
    h: Var,
    layer: &GnnLayerParams,
) -> Result<Var, TensorError> {
    let norm = normalized_operator(tape, a, GnnVariant::GraphsageMean)?;
    propagate(store, tape, norm, h, layer, true)
}

/// A K-layer message-passing module `Z = GNN(A, X)`.
///
/// With `linear_output` set, the final layer skips the ReLU and the
/// post-layer normalizations; assignment logits feeding a softmax use this.
#[derive(Clone, Debug)]
pub struct GnnModule {
    pub layers: Vec<GnnLayerParams>,
    pub use_bn: bool,
    pub use_l2_norm: bool,
    pub linear_output: bool,
}

impl GnnModule {
    /// Builds K = `widths.len() - 1` chained layers named under `prefix`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        variant: GnnVariant,
        widths: &[usize],
        use_bn: bool,
        use_l2_norm: bool,
        linear_output: bool,
        rng: &mut Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "a module needs at least one layer");
        let k = widths.len() - 1;
        let layers = (0..k)
            .map(|i| {
                let is_linear_tail = linear_output && i == k - 1;
                GnnLayerParams::new(
                    store,
                    &format!("{prefix}.layer{i}"),
                    variant,
                    widths[i],
                    widths[i + 1],
                    use_bn && !is_linear_tail,
                    rng,
                )
            })
            .collect();
        GnnModule {
            layers,
            use_bn,
            use_l2_norm,
            linear_output,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.d_in).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.d_out).unwrap_or(0)
    }

    pub fn variant(&self) -> GnnVariant {
        self.layers[0].variant
    }

    /// Prefix used at construction, recovered from the first parameter name.
    pub fn describe(&self, store: &ParamStore) -> String {
        store.param(self.layers[0].weight).name.clone()
    }

    /// Runs the K layers on a raw adjacency.
    pub fn forward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        a: Var,
        x: Var,
        mode: Mode,
    ) -> Result<Var, TensorError> {
        let norm = normalized_operator(tape, a, self.variant())?;
        self.forward_prenormalized(store, tape, norm, x, mode)
    }

    /// Runs the K layers on an already-normalized operator, so callers that
    /// apply several modules to the same adjacency normalize once.
    pub fn forward_prenormalized(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        norm: Var,
        x: Var,
        mode: Mode,
    ) -> Result<Var, TensorError> {
        let k = self.layers.len();
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let is_linear_tail = self.linear_output && i == k - 1;
            h = propagate(store, tape, norm, h, layer, !is_linear_tail)?;
            if is_linear_tail {
                break;
            }
            if self.use_bn {
                let bn = layer.bn.as_ref().expect("bn ids exist when use_bn");
                let gamma = tape.bind(bn.gamma, store);
                let beta = tape.bind(bn.beta, store);
                let (rm, rv) = store.buffer_pair_mut(bn.running_mean, bn.running_var);
                h = tape.batch_norm(h, gamma, beta, rm, rv, mode)?;
            }
            if self.use_l2_norm {
                h = tape.row_l2_normalize(h)?;
            }
        }
        Ok(h)
    }
}
