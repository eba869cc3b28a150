//! Dense layers shared by the encoders, the readout and the backbone.

use rand::Rng;

use crate::error::TensorError;
use crate::tensor::{Activation, ParamId, ParamSet, Tape, Tensor, Var};

/// Uniform fan-in init, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fan_in(rng: &mut impl Rng, fan_in: usize, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(params: &mut ParamSet, rng: &mut impl Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = params.add(format!("{name}.weight"), uniform_fan_in(rng, fan_in, fan_in, fan_out));
        let bias = params.add(format!("{name}.bias"), uniform_fan_in(rng, fan_in, 1, fan_out));
        Linear { weight, bias }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, params: &ParamSet, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        x.matmul(tape.param(params, self.weight))?
            .add(tape.param(params, self.bias))
    }
}

/// Two-layer perceptron `in -> hidden -> out` with one activation between.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        dims: (usize, usize, usize),
        activation: Activation,
    ) -> Self {
        let (i, h, o) = dims;
        Mlp {
            first: Linear::new(params, rng, &format!("{name}.0"), i, h),
            second: Linear::new(params, rng, &format!("{name}.1"), h, o),
            activation,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, params: &ParamSet, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let h = self.first.forward(tape, params, x)?.activate(self.activation);
        self.second.forward(tape, params, h)
    }
}
