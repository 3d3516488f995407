//! Error types shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by tensor and tape operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A scalar (1×1) value was required.
    NotScalar { rows: usize, cols: usize },
    /// A tape handle was used with a tape it was not minted from, or after
    /// the tape was cleared.
    TapeMismatch,
    /// An operation that needs at least one row received none.
    EmptyInput { op: &'static str },
    /// A class index is outside the logit range.
    LabelOutOfRange { label: usize, classes: usize },
    /// A row that must be a probability vector does not sum to 1.
    RowSumViolation {
        op: &'static str,
        row: usize,
        sum: f64,
    },
    /// A degree-normalized operator encountered a non-positive row sum.
    DegenerateDegree { row: usize, value: f64 },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            TensorError::NotScalar { rows, cols } => {
                write!(f, "expected 1x1 scalar, got {rows}x{cols}")
            }
            TensorError::TapeMismatch => write!(f, "value does not belong to this tape"),
            TensorError::EmptyInput { op } => write!(f, "{op}: empty input"),
            TensorError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            TensorError::RowSumViolation { op, row, sum } => {
                write!(f, "{op}: row {row} sums to {sum}, expected 1")
            }
            TensorError::DegenerateDegree { row, value } => {
                write!(f, "degree normalization: row {row} has degree {value}")
            }
        }
    }
}

impl core::error::Error for TensorError {}

/// Errors raised during dataset ingestion, batching, and splitting.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    /// A required dataset file is absent.
    MissingFile { name: String },
    /// A dataset file line could not be interpreted.
    Format {
        file: String,
        line: usize,
        message: String,
    },
    /// A node index in an edge list is outside the declared node range.
    NodeIndexOutOfRange {
        file: String,
        line: usize,
        index: usize,
        max: usize,
    },
    /// Adjacency or feature matrices violate the graph invariants.
    InvalidGraph { message: String },
    /// Structural features were already appended to this graph.
    StructuralFeaturesAlreadyAdded,
    /// A graph exceeds the padded batch capacity.
    GraphTooLarge { nodes: usize, n_max: usize },
    /// A class has too few members to be spread over the requested folds.
    StratificationInfeasible {
        class: usize,
        count: usize,
        folds: usize,
    },
    /// A train/validation/test split is empty.
    EmptySplit { which: &'static str },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::MissingFile { name } => write!(f, "missing dataset file: {name}"),
            GraphError::Format {
                file,
                line,
                message,
            } => write!(f, "{file}:{line}: {message}"),
            GraphError::NodeIndexOutOfRange {
                file,
                line,
                index,
                max,
            } => write!(
                f,
                "{file}:{line}: node index {index} out of range (dataset has {max} nodes)"
            ),
            GraphError::InvalidGraph { message } => write!(f, "invalid graph: {message}"),
            GraphError::StructuralFeaturesAlreadyAdded => {
                write!(f, "structural features were already appended to this graph")
            }
            GraphError::GraphTooLarge { nodes, n_max } => {
                write!(f, "graph with {nodes} nodes exceeds batch capacity {n_max}")
            }
            GraphError::StratificationInfeasible {
                class,
                count,
                folds,
            } => write!(
                f,
                "class {class} has only {count} graphs, cannot stratify into {folds} folds"
            ),
            GraphError::EmptySplit { which } => write!(f, "empty {which} split"),
        }
    }
}

impl core::error::Error for GraphError {}

/// Crate-level error combining the module-specific kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    Tensor(TensorError),
    Graph(GraphError),
    /// An architecture or hyperparameter value is unusable.
    Config(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Tensor(e) => write!(f, "{e}"),
            CoreError::Graph(e) => write!(f, "{e}"),
            CoreError::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

impl From<TensorError> for CoreError {
    fn from(e: TensorError) -> Self {
        CoreError::Tensor(e)
    }
}

impl From<GraphError> for CoreError {
    fn from(e: GraphError) -> Self {
        CoreError::Graph(e)
    }
}
