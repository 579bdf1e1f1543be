use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate at node {node}")]
    NonFiniteCoordinate { node: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("mapping is not a permutation of 0..{n}: {reason}")]
    InvalidPermutation { n: usize, reason: String },

    #[error("graph {index} does not match the batch: {reason}")]
    BatchMismatch { index: usize, reason: String },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("backward requires a scalar loss, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("unsupported atomic number {z} at node {node}")]
    UnsupportedElement { z: u32, node: usize },

    #[error("element table: {0}")]
    ElementTable(String),

    #[error("channel `{channel}` has width {got}, expected {expected}")]
    ChannelWidth { channel: &'static str, expected: usize, got: usize },

    #[error("missing channel `{channel}` required by scheme {scheme}")]
    MissingChannel { channel: &'static str, scheme: &'static str },

    #[error("coincident positions for nodes {u} and {v}")]
    CoincidentPoints { u: usize, v: usize },

    #[error("positions are required by the {0} layer")]
    MissingPositions(&'static str),

    #[error("hidden width {hidden} is not divisible by {heads} attention heads")]
    HeadDivisibility { hidden: usize, heads: usize },

    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("empty graph cannot be pooled (graph {0})")]
    EmptyGraph(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("schema violation at line {line}: {path}: {reason}")]
    Schema { line: usize, path: String, reason: String },

    #[error("{0}")]
    Data(String),

    #[error("search space: {0}")]
    SearchSpace(String),

    #[error("all {count} trials failed: {summary}")]
    AllTrialsFailed { count: usize, summary: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
