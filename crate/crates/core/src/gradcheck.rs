//! Central finite-difference gradient oracles.
//!
//! These checks are the independent reference for every backward rule in
//! [`crate::tensor`]: they evaluate forward closures numerically and never
//! touch the reverse-mode code they verify. They back both the test suite
//! and the `gradcheck` CLI command.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, TensorError};
use crate::graph::Graph;
use crate::model::{build_model, total_loss_var, ModelConfig};
use crate::rng::Rng;
use crate::tensor::{Mode, Tape, Tensor, Var};

/// Step for central differences.
pub const FD_STEP: f64 = 1e-6;
/// Pass threshold for individual operations.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Pass threshold for the end-to-end model gradient.
pub const MODEL_TOLERANCE: f64 = 1e-3;

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let original = probe[i];
        probe[i] = original + step;
        let plus = f(&probe);
        probe[i] = original - step;
        let minus = f(&probe);
        probe[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative error between analytic and numeric gradients. The
/// denominator is floored so near-zero entries are compared absolutely at
/// `floor × tolerance` scale rather than blowing up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// One checked operation: its name, observed worst relative error, and the
/// threshold it must stay under.
#[derive(Clone, Debug)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Full gradient-check report: per-operation entries plus the end-to-end
/// model check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<CheckEntry>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed())
    }
}

type ForwardFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>>;

struct OpCheck {
    name: &'static str,
    inputs: Vec<Tensor>,
    forward: ForwardFn,
}

impl OpCheck {
    /// Loss = Σ (op output ⊙ R) for a fixed random R, so upstream gradients
    /// are non-uniform. Returns the worst relative error over all inputs.
    fn run(&self) -> f64 {
        let eval = |tensors: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t)).collect();
            let out = (self.forward)(&mut tape, &vars).expect("forward in gradient check");
            let weights = weight_tensor(out.shape());
            let w = tape.constant(&weights);
            let prod = tape.mul_elem(out, w).unwrap();
            let loss = tape.sum_all(prod).unwrap();
            tape.values(loss).unwrap()[0]
        };

        // Analytic pass.
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .inputs
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.requires_grad = true;
                tape.leaf(&t)
            })
            .collect();
        let out = (self.forward)(&mut tape, &vars).expect("forward in gradient check");
        let weights = weight_tensor(out.shape());
        let w = tape.constant(&weights);
        let prod = tape.mul_elem(out, w).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        tape.backward(loss).expect("backward in gradient check");

        let mut worst = 0.0f64;
        for (k, var) in vars.iter().enumerate() {
            let analytic = tape.grad(*var).unwrap();
            let mut f = |x: &[f64]| -> f64 {
                let mut tensors = self.inputs.clone();
                tensors[k] = Tensor::from_vec(
                    self.inputs[k].rows(),
                    self.inputs[k].cols(),
                    x.to_vec(),
                );
                eval(&tensors)
            };
            let numeric = central_difference(&mut f, self.inputs[k].data(), FD_STEP);
            worst = worst.max(max_relative_error(analytic.data(), &numeric, 1e-3));
        }
        worst
    }
}

/// Deterministic pseudo-random weighting tensor for a given output shape.
fn weight_tensor((rows, cols): (usize, usize)) -> Tensor {
    let mut rng = Rng::seed_from(0x5eed_0f0e);
    Tensor::from_fn(rows, cols, |_, _| rng.uniform(0.25, 1.75))
}

fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.uniform(lo, hi))
}

/// Random tensor whose entries stay away from zero (for kinked ops).
fn random_tensor_away_from_zero(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let magnitude = rng.uniform(0.1, 1.0);
        if rng.next_f64() < 0.5 {
            -magnitude
        } else {
            magnitude
        }
    })
}

/// Gradient checks for every differentiable tape operation.
pub fn op_suite(seed: u64) -> Vec<CheckEntry> {
    let mut rng = Rng::seed_from(seed);

    let mut checks: Vec<OpCheck> = Vec::new();

    checks.push(OpCheck {
        name: "matmul",
        inputs: vec![
            random_tensor(&mut rng, 3, 4, -1.0, 1.0),
            random_tensor(&mut rng, 4, 2, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.matmul(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "add",
        inputs: vec![
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.add(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "sub",
        inputs: vec![
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.sub(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "mul_elem",
        inputs: vec![
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.mul_elem(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "scale",
        inputs: vec![random_tensor(&mut rng, 2, 3, -1.0, 1.0)],
        forward: Box::new(|tape, v| tape.scale(v[0], -0.7)),
    });
    checks.push(OpCheck {
        name: "add_row_vec",
        inputs: vec![
            random_tensor(&mut rng, 3, 4, -1.0, 1.0),
            random_tensor(&mut rng, 1, 4, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.add_row_vec(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "transpose",
        inputs: vec![random_tensor(&mut rng, 2, 5, -1.0, 1.0)],
        forward: Box::new(|tape, v| tape.transpose(v[0])),
    });
    checks.push(OpCheck {
        name: "concat_cols",
        inputs: vec![
            random_tensor(&mut rng, 2, 3, -1.0, 1.0),
            random_tensor(&mut rng, 2, 2, -1.0, 1.0),
            random_tensor(&mut rng, 2, 4, -1.0, 1.0),
        ],
        forward: Box::new(|tape, v| tape.concat_cols(v)),
    });
    checks.push(OpCheck {
        name: "row_mean",
        inputs: vec![random_tensor(&mut rng, 4, 3, -1.0, 1.0)],
        forward: Box::new(|tape, v| tape.row_mean(v[0])),
    });
    checks.push(OpCheck {
        name: "sum_all",
        inputs: vec![random_tensor(&mut rng, 3, 3, -1.0, 1.0)],
        forward: Box::new(|tape, v| tape.sum_all(v[0])),
    });
    checks.push(OpCheck {
        name: "relu",
        inputs: vec![random_tensor_away_from_zero(&mut rng, 2, 3)],
        forward: Box::new(|tape, v| tape.relu(v[0])),
    });
    checks.push(OpCheck {
        name: "row_softmax",
        inputs: vec![random_tensor(&mut rng, 3, 4, -2.0, 2.0)],
        forward: Box::new(|tape, v| tape.row_softmax(v[0])),
    });
    checks.push(OpCheck {
        name: "row_l2_normalize",
        inputs: vec![random_tensor_away_from_zero(&mut rng, 2, 3)],
        forward: Box::new(|tape, v| tape.row_l2_normalize(v[0])),
    });
    checks.push(OpCheck {
        name: "frobenius_diff_norm",
        inputs: vec![
            random_tensor(&mut rng, 3, 3, -1.0, 1.0),
            random_tensor(&mut rng, 3, 3, 1.5, 2.5),
        ],
        forward: Box::new(|tape, v| tape.frobenius_diff_norm(v[0], v[1])),
    });
    checks.push(OpCheck {
        name: "row_entropy_mean",
        // Rows are made valid probability vectors through softmax, checking
        // the chained gradient.
        inputs: vec![random_tensor(&mut rng, 3, 4, -1.5, 1.5)],
        forward: Box::new(|tape, v| {
            let s = tape.row_softmax(v[0])?;
            tape.row_entropy_mean(s)
        }),
    });
    checks.push(OpCheck {
        name: "degree_normalize_sym",
        inputs: vec![random_tensor(&mut rng, 4, 4, 0.2, 1.5)],
        forward: Box::new(|tape, v| tape.degree_normalize_sym(v[0])),
    });
    checks.push(OpCheck {
        name: "degree_normalize_rows",
        inputs: vec![random_tensor(&mut rng, 4, 4, 0.2, 1.5)],
        forward: Box::new(|tape, v| tape.degree_normalize_rows(v[0])),
    });
    checks.push(OpCheck {
        name: "batch_norm",
        inputs: vec![
            random_tensor(&mut rng, 6, 3, -1.0, 1.0),
            random_tensor(&mut rng, 1, 3, 0.5, 1.5),
            random_tensor(&mut rng, 1, 3, -0.5, 0.5),
        ],
        forward: Box::new(|tape, v| {
            let mut rm = vec![0.0; 3];
            let mut rv = vec![1.0; 3];
            tape.batch_norm(v[0], v[1], v[2], &mut rm, &mut rv, Mode::Train)
        }),
    });
    checks.push(OpCheck {
        name: "cross_entropy_from_logits",
        inputs: vec![random_tensor(&mut rng, 1, 4, -2.0, 2.0)],
        forward: Box::new(|tape, v| tape.cross_entropy_from_logits(v[0], 2)),
    });

    checks
        .iter()
        .map(|c| CheckEntry {
            name: c.name.into(),
            max_rel_err: c.run(),
            tolerance: OP_TOLERANCE,
        })
        .collect()
}

/// End-to-end check: the gradient of the full training objective with
/// respect to every model parameter on a small two-class graph, against
/// central finite differences.
pub fn model_end_to_end(seed: u64) -> Result<CheckEntry, CoreError> {
    let mut rng = Rng::seed_from(seed);

    // 6-node graph: two triangles joined by one edge, random features.
    let mut adjacency = Tensor::zeros(6, 6);
    for &(i, j) in &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)] {
        adjacency.set(i, j, 1.0);
        adjacency.set(j, i, 1.0);
    }
    let features = random_tensor(&mut rng, 6, 3, 0.1, 1.0);
    let graph = Graph::new(adjacency, features, 1)?;

    let mut config = ModelConfig::new(2, 6);
    config.hidden_dim = 5;
    config.gnn_layers_per_block = 2;
    config.num_diffpool_layers = 1;
    config.cluster_ratio = 0.5;
    let mut model = build_model(&config, 3, seed)?;

    let flat_len: usize = model.store().num_scalars();
    let mut flat = Vec::with_capacity(flat_len);
    for p in model.store().params() {
        flat.extend_from_slice(p.value.data());
    }

    // Analytic gradients.
    model.store_mut().zero_grads();
    let mut tape = Tape::new();
    let pass = model.forward_on_tape(&mut tape, &graph, Mode::Train)?;
    let loss = total_loss_var(&mut tape, &pass, 1.0, 1.0)?;
    tape.backward(loss)?;
    tape.accumulate_param_grads(model.store_mut());
    let mut analytic = Vec::with_capacity(flat_len);
    for p in model.store().params() {
        analytic.extend_from_slice(p.value.grad.as_ref().expect("gradient populated"));
    }

    // Numeric gradients over the flattened parameter vector.
    let mut f = |x: &[f64]| -> f64 {
        let mut m = model.clone();
        let mut offset = 0;
        for p in m.store_mut().params_mut() {
            let len = p.value.data().len();
            p.value.data_mut().copy_from_slice(&x[offset..offset + len]);
            offset += len;
        }
        let mut tape = Tape::new();
        let pass = m
            .forward_on_tape(&mut tape, &graph, Mode::Train)
            .expect("forward in model gradient check");
        let loss = total_loss_var(&mut tape, &pass, 1.0, 1.0).expect("loss in gradient check");
        tape.values(loss).unwrap()[0]
    };
    let numeric = central_difference(&mut f, &flat, FD_STEP);

    Ok(CheckEntry {
        name: format!("model_end_to_end(seed={seed})"),
        max_rel_err: max_relative_error(&analytic, &numeric, 1e-3),
        tolerance: MODEL_TOLERANCE,
    })
}

/// Runs the whole suite. With `inject_fault` set, one analytic gradient is
/// deliberately corrupted before comparison, so the report must fail — the
/// negative control that proves the checker has teeth.
pub fn run_full(seed: u64, inject_fault: bool) -> Result<GradCheckReport, CoreError> {
    let mut entries = op_suite(seed);
    entries.push(model_end_to_end(seed)?);
    if inject_fault {
        entries.push(faulty_backward_entry(seed));
    }
    Ok(GradCheckReport { entries })
}

/// Compares a deliberately wrong analytic gradient (for `sum(x ⊙ x)`, claiming
/// `∂/∂x = x` instead of `2x`) against finite differences.
pub fn faulty_backward_entry(seed: u64) -> CheckEntry {
    let mut rng = Rng::seed_from(seed);
    let x = random_tensor(&mut rng, 2, 2, 0.5, 1.5);
    let wrong: Vec<f64> = x.data().to_vec();
    let mut f = |v: &[f64]| -> f64 { v.iter().map(|a| a * a).sum() };
    let numeric = central_difference(&mut f, x.data(), FD_STEP);
    CheckEntry {
        name: "injected_fault".into(),
        max_rel_err: max_relative_error(&wrong, &numeric, 1e-3),
        tolerance: OP_TOLERANCE,
    }
}
