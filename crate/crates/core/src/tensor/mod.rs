//! Dense f64 tensors, a define-by-run reverse-mode tape, and Adam.
//!
//! Every tensor that flows through the tape is two-dimensional (`rows x cols`);
//! scalars are `1 x 1`. Broadcasting is limited to a `1 x d` right-hand operand
//! repeated over the leading dimension.

mod adam;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamSet, ParamSnapshot};
pub use tape::{NodeOperator, Segments, Tape, Var};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TensorError;

/// Row-major dense tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// `rows x cols` matrix. Panics if `data.len() != rows * cols`.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Tensor {
            shape: vec![rows, cols],
            data,
            grad: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Tensor::matrix(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::matrix(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor::matrix(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::matrix(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Option<Vec<f64>>) {
        if let Some(g) = &grad {
            debug_assert_eq!(g.len(), self.data.len());
        }
        self.grad = grad;
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows reordered so that output row `perm[i]` is input row `i`.
    pub fn permute_rows(&self, perm: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = vec![0.0; self.data.len()];
        for (i, &pi) in perm.iter().enumerate() {
            data[pi * c..(pi + 1) * c].copy_from_slice(self.row(i));
        }
        Tensor::matrix(self.rows(), c, data)
    }

    pub(crate) fn matmul_raw(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        let n = other.cols();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub(crate) fn transpose_raw(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cols();
        write!(f, "[")?;
        for r in 0..self.rows() {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", &self.data[r * c..(r + 1) * c])?;
        }
        write!(f, "]")
    }
}

/// Element-wise nonlinearities available to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Gelu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given input `x` and output `y = apply(x)`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "gelu" => Ok(Activation::Gelu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_data_length() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::DataLength { .. })
        ));
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn elu_at_minus_one() {
        let y = Activation::Elu.apply(-1.0);
        assert!((y - (std::f64::consts::E.recip() - 1.0)).abs() < 1e-15);
        assert!((y + 0.6321).abs() < 1e-4);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        let h = 1e-6;
        for act in [Activation::Elu, Activation::Gelu, Activation::Tanh] {
            for &x in &[-2.0, -0.3, 0.4, 1.7] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let d = act.derivative(x, act.apply(x));
                assert!((fd - d).abs() < 1e-8, "{act} at {x}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn permute_rows_moves_rows() {
        let t = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let p = t.permute_rows(&[2, 0, 1]);
        assert_eq!(p.data(), &[2.0, 3.0, 1.0]);
    }
}
