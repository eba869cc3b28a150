//! Graph adaptive ARMA networks: graph-to-sequence lifting, neural ARMA
//! recurrences with selective coefficients, state-space analysis, synthetic
//! benchmarks and a training harness.

pub mod arma;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kv;
pub mod lift;
pub mod nn;
pub mod selector;
pub mod selftest;
pub mod ssm;
pub mod tensor;

pub use arma::{Architecture, GramaModel, ModelConfig, TaskLevel};
pub use datasets::{Dataset, DatasetSpec, PropertySpec, PropertyTask, Split, Topology, TransferSpec};
pub use error::{Error, GraphError, Result, TensorError};
pub use graph::{Graph, Targets};
pub use harness::{GramaConfig, Metric, RunRecord, TrainOutcome};
pub use selector::{ArmaCoefficients, SelectorMode};
pub use ssm::{build_ssm, propagation_horizon, spectral_radius, Horizon, StabilityReport, StateSpace};
pub use tensor::{Activation, Tape, Tensor, Var};
