use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("missing gradient for parameter '{0}'")]
    MissingGradient(String),
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({u}, {v}) out of range for {n} nodes")]
    EdgeOutOfRange { u: usize, v: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("permutation is not a bijection on 0..{0}")]
    NotBijective(usize),
    #[error("feature width mismatch: expected {expected}, found {found}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("target mismatch: {0}")]
    Targets(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph has no nodes")]
    Empty,
    #[error("mark '{role}' refers to node {node} outside 0..{n}")]
    MarkOutOfRange { role: String, node: usize, n: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{op}: needs {needed} history elements, only {available} available")]
    InsufficientHistory {
        op: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("metric {metric} does not apply to task {task}")]
    MetricMismatch { metric: String, task: String },
    #[error("training diverged at epoch {epoch} (loss {loss}); coefficient stability: {report}")]
    Diverged {
        epoch: usize,
        loss: f64,
        report: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
