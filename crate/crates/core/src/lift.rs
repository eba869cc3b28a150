//! Lifting a static graph into a graph sequence.

use rand::Rng;

use crate::error::{GraphError, Result, TensorError};
use crate::graph::Graph;
use crate::nn::Mlp;
use crate::tensor::{Activation, ParamSet, Tape, Tensor, Var};

/// Paired state and residual sequences over one (possibly batched) graph.
/// Every element is an `n x d` matrix.
#[derive(Clone, Debug)]
pub struct GraphSequence<'t> {
    pub states: Vec<Var<'t>>,
    pub residuals: Vec<Var<'t>>,
    /// Index of the block that produced this sequence; 0 for the lift.
    pub stage: usize,
}

impl<'t> GraphSequence<'t> {
    pub fn new(states: Vec<Var<'t>>, residuals: Vec<Var<'t>>, stage: usize) -> Result<Self> {
        if states.is_empty() || states.len() != residuals.len() {
            return Err(TensorError::InvalidArgument {
                op: "graph_sequence",
                detail: format!("{} states vs {} residuals", states.len(), residuals.len()),
            }
            .into());
        }
        let shape = states[0].shape();
        for v in states.iter().chain(&residuals) {
            if v.shape() != shape {
                return Err(TensorError::ShapeMismatch {
                    op: "graph_sequence",
                    left: shape,
                    right: v.shape(),
                }
                .into());
            }
        }
        Ok(GraphSequence { states, residuals, stage })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> Var<'t> {
        *self.states.last().expect("non-empty sequence")
    }

    pub fn state_values(&self) -> Vec<Tensor> {
        self.states.iter().map(|v| (*v.value()).clone()).collect()
    }

    pub fn residual_values(&self) -> Vec<Tensor> {
        self.residuals.iter().map(|v| (*v.value()).clone()).collect()
    }
}

/// `delta[l] = f[l+1] - f[l]` for `l < L-1`, and `delta[L-1] = 0`.
pub fn initial_residuals<'t>(tape: &'t Tape, states: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
    let mut out = Vec::with_capacity(states.len());
    for w in states.windows(2) {
        out.push(w[1].sub(w[0])?);
    }
    let last = states.last().expect("non-empty states");
    out.push(tape.constant(Tensor::zeros(last.rows(), last.cols())));
    Ok(out)
}

/// One encoder per sequence position, each `c -> d -> d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftEncoders {
    pub encoders: Vec<Mlp>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LiftEncoders {
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        len: usize,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        let encoders = (0..len)
            .map(|k| Mlp::new(params, rng, &format!("lift.{k}"), (in_dim, out_dim, out_dim), activation))
            .collect();
        LiftEncoders { encoders, in_dim, out_dim }
    }

    pub fn len(&self) -> usize {
        self.encoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoders.is_empty()
    }

    pub fn lift<'t>(&self, tape: &'t Tape, params: &ParamSet, g: &Graph) -> Result<GraphSequence<'t>> {
        if g.feature_width() != self.in_dim {
            return Err(GraphError::FeatureWidth {
                expected: self.in_dim,
                found: g.feature_width(),
            }
            .into());
        }
        let f = tape.constant(g.features().clone());
        let states = self
            .encoders
            .iter()
            .map(|enc| enc.forward(tape, params, f))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let residuals = initial_residuals(tape, &states)?;
        GraphSequence::new(states, residuals, 0)
    }
}

/// Element-wise `act` on both sequences.
pub fn apply_nonlinearity<'t>(seq: &GraphSequence<'t>, act: Activation) -> GraphSequence<'t> {
    GraphSequence {
        states: seq.states.iter().map(|v| v.activate(act)).collect(),
        residuals: seq.residuals.iter().map(|v| v.activate(act)).collect(),
        stage: seq.stage,
    }
}
