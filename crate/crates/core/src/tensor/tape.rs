use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::params::{Gradients, ParamId, ParamSet};
use super::{Activation, Tensor};
use crate::error::TensorError;

/// A fixed linear map over the node (row) dimension, e.g. a normalized
/// adjacency. `apply` maps `n x d -> n x d`.
pub trait NodeOperator: fmt::Debug {
    fn size(&self) -> usize;
    fn apply(&self, x: &Tensor) -> Tensor;
    fn apply_transpose(&self, x: &Tensor) -> Tensor;
}

/// Contiguous row groups, one per graph in a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn new(sizes: &[usize]) -> Result<Self, TensorError> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(TensorError::InvalidArgument {
                op: "segments",
                detail: format!("segment sizes must be positive, got {sizes:?}"),
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Segments { offsets })
    }

    pub fn single(n: usize) -> Self {
        Segments::new(&[n]).expect("single segment needs n > 0")
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Unary(usize, Activation),
    MeanAxis(usize, usize),
    Sum(usize),
    Concat(Vec<usize>, usize),
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Transpose(usize),
    Mse(usize, usize),
    Operator(usize, Rc<dyn NodeOperator>),
    SegmentMean(usize, Rc<Segments>),
    SegmentScale(usize, usize, Rc<Segments>),
    RepeatRows(usize),
    SumNormalize(usize, f64),
    L1Project(usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    param: Option<ParamId>,
}

/// Define-by-run computation record. Rebuilt for every forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
        None => *acc = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, param: Option<ParamId>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            param,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, None)
    }

    /// Differentiable leaf bound to a parameter; its gradient is reported by
    /// [`Tape::backward`].
    pub fn param(&self, params: &ParamSet, id: ParamId) -> Var<'_> {
        let mut value = params.get(id).clone();
        value.clear_grad();
        self.push(value, Op::Leaf, Some(id))
    }

    /// Concatenate along `axis` (0 stacks rows, 1 stacks columns).
    pub fn concat<'t>(&'t self, vars: &[Var<'t>], axis: usize) -> Result<Var<'t>, TensorError> {
        let first = vars.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let values: Vec<Rc<Tensor>> = vars.iter().map(|v| v.value()).collect();
        let (r0, c0) = (first.rows(), first.cols());
        let out = match axis {
            0 => {
                let mut data = Vec::new();
                let mut rows = 0;
                for v in &values {
                    if v.cols() != c0 {
                        return Err(mismatch("concat", &values[0], v));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Tensor::matrix(rows, c0, data)
            }
            1 => {
                let mut cols = 0;
                for v in &values {
                    if v.rows() != r0 {
                        return Err(mismatch("concat", &values[0], v));
                    }
                    cols += v.cols();
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for v in &values {
                        data.extend_from_slice(v.row(r));
                    }
                }
                Tensor::matrix(r0, cols, data)
            }
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "concat",
                    detail: format!("axis {axis} out of range"),
                })
            }
        };
        Ok(self.push(out, Op::Concat(vars.iter().map(|v| v.id).collect(), axis), None))
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every
    /// parameter leaf on the tape and clears the tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        let loss_value = loss.value();
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| -> &Tensor { &nodes[i].value };
            match &node.op {
                Op::Leaf => {
                    if let Some(pid) = node.param {
                        out.accumulate(pid, Tensor::matrix(node.value.rows(), node.value.cols(), g));
                    }
                }
                Op::MatMul(a, b) => {
                    let gt = Tensor::matrix(node.value.rows(), node.value.cols(), g);
                    let da = gt.matmul_raw(&val(*b).transpose_raw());
                    let db = val(*a).transpose_raw().matmul_raw(&gt);
                    add_into(&mut grads[*a], da.into_data());
                    add_into(&mut grads[*b], db.into_data());
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let bv = val(*b);
                    let db = if bv.numel() == g.len() {
                        g.iter().map(|x| sign * x).collect()
                    } else {
                        let c = bv.cols();
                        let mut acc = vec![0.0; c];
                        for chunk in g.chunks(c) {
                            acc.iter_mut().zip(chunk).for_each(|(s, x)| *s += sign * x);
                        }
                        acc
                    };
                    add_into(&mut grads[*b], db);
                    add_into(&mut grads[*a], g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let da = g.iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    let db = g.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[*a], da);
                    add_into(&mut grads[*b], db);
                }
                Op::Scale(a, s) => {
                    add_into(&mut grads[*a], g.iter().map(|x| s * x).collect());
                }
                Op::Unary(a, act) => {
                    let x = val(*a);
                    let da = g
                        .iter()
                        .zip(x.data())
                        .zip(node.value.data())
                        .map(|((gi, &xi), &yi)| gi * act.derivative(xi, yi))
                        .collect();
                    add_into(&mut grads[*a], da);
                }
                Op::MeanAxis(a, axis) => {
                    let x = val(*a);
                    let (r, c) = (x.rows(), x.cols());
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = if *axis == 0 {
                                g[j] / r as f64
                            } else {
                                g[i] / c as f64
                            };
                        }
                    }
                    add_into(&mut grads[*a], da);
                }
                Op::Sum(a) => {
                    let n = val(*a).numel();
                    add_into(&mut grads[*a], vec![g[0]; n]);
                }
                Op::Concat(ids, axis) => {
                    let total_cols = node.value.cols();
                    let mut offset = 0;
                    for &i in ids {
                        let v = val(i);
                        let part: Vec<f64> = if *axis == 0 {
                            let len = v.numel();
                            let s = g[offset..offset + len].to_vec();
                            offset += len;
                            s
                        } else {
                            let c = v.cols();
                            let mut s = Vec::with_capacity(v.numel());
                            for r in 0..v.rows() {
                                let base = r * total_cols + offset;
                                s.extend_from_slice(&g[base..base + c]);
                            }
                            offset += c;
                            s
                        };
                        add_into(&mut grads[i], part);
                    }
                }
                Op::Slice { input, axis, start } => {
                    let x = val(*input);
                    let (r, c) = (x.rows(), x.cols());
                    let oc = node.value.cols();
                    let mut da = vec![0.0; r * c];
                    if *axis == 0 {
                        da[start * c..start * c + g.len()].copy_from_slice(&g);
                    } else {
                        for i in 0..r {
                            da[i * c + start..i * c + start + oc]
                                .copy_from_slice(&g[i * oc..(i + 1) * oc]);
                        }
                    }
                    add_into(&mut grads[*input], da);
                }
                Op::Transpose(a) => {
                    let gt = Tensor::matrix(node.value.rows(), node.value.cols(), g);
                    add_into(&mut grads[*a], gt.transpose_raw().into_data());
                }
                Op::Mse(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let n = av.numel() as f64;
                    let da: Vec<f64> = av
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(x, y)| 2.0 * (x - y) / n * g[0])
                        .collect();
                    let db = da.iter().map(|x| -x).collect();
                    add_into(&mut grads[*a], da);
                    add_into(&mut grads[*b], db);
                }
                Op::Operator(a, op) => {
                    let gt = Tensor::matrix(node.value.rows(), node.value.cols(), g);
                    add_into(&mut grads[*a], op.apply_transpose(&gt).into_data());
                }
                Op::SegmentMean(a, seg) => {
                    let x = val(*a);
                    let c = x.cols();
                    let mut da = vec![0.0; x.numel()];
                    for s in 0..seg.count() {
                        let range = seg.range(s);
                        let inv = 1.0 / range.len() as f64;
                        for r in range {
                            for j in 0..c {
                                da[r * c + j] = g[s * c + j] * inv;
                            }
                        }
                    }
                    add_into(&mut grads[*a], da);
                }
                Op::SegmentScale(x, coef, seg) => {
                    let (xv, cv) = (val(*x), val(*coef));
                    let c = xv.cols();
                    let mut dx = vec![0.0; xv.numel()];
                    let mut dc = vec![0.0; cv.numel()];
                    for (s, dcs) in dc.iter_mut().enumerate() {
                        let k = cv.data()[s];
                        for r in seg.range(s) {
                            for j in 0..c {
                                let idx = r * c + j;
                                dx[idx] = k * g[idx];
                                *dcs += g[idx] * xv.data()[idx];
                            }
                        }
                    }
                    add_into(&mut grads[*x], dx);
                    add_into(&mut grads[*coef], dc);
                }
                Op::RepeatRows(a) => {
                    let c = val(*a).cols();
                    let mut da = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        da.iter_mut().zip(chunk).for_each(|(s, x)| *s += x);
                    }
                    add_into(&mut grads[*a], da);
                }
                Op::SumNormalize(a, eps) => {
                    let x = val(*a);
                    let c = x.cols();
                    let mut da = vec![0.0; x.numel()];
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        let s: f64 = row.iter().sum();
                        if s.abs() < *eps {
                            continue;
                        }
                        let gr = &g[r * c..(r + 1) * c];
                        let gx: f64 = gr.iter().zip(row).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            da[r * c + k] = gr[k] / s - gx / (s * s);
                        }
                    }
                    add_into(&mut grads[*a], da);
                }
                Op::L1Project(a) => {
                    let x = val(*a);
                    let c = x.cols();
                    let mut da = g.clone();
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        let s: f64 = row.iter().map(|v| v.abs()).sum();
                        if s <= 1.0 {
                            continue;
                        }
                        let gr = &g[r * c..(r + 1) * c];
                        let gx: f64 = gr.iter().zip(row).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            let sign = if row[k] > 0.0 {
                                1.0
                            } else if row[k] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            da[r * c + k] = gr[k] / s - sign * gx / (s * s);
                        }
                    }
                    add_into(&mut grads[*a], da);
                }
            }
        }
        Ok(out)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value().rows()
    }

    pub fn cols(&self) -> usize {
        self.value().cols()
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op, None)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(mismatch("matmul", &a, &b));
        }
        let out = a.matmul_raw(&b);
        Ok(self.push(out, Op::MatMul(self.id, other.id)))
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        broadcast: bool,
    ) -> Result<Tensor, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
            return Ok(Tensor::matrix(a.rows(), a.cols(), data));
        }
        if broadcast && b.rows() == 1 && b.cols() == a.cols() {
            let c = a.cols();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| f(*x, b.data()[i % c]))
                .collect();
            return Ok(Tensor::matrix(a.rows(), c, data));
        }
        Err(mismatch(name, &a, &b))
    }

    /// `self + other`; `other` may be a `1 x d` row broadcast over rows.
    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Add`
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.binary(other, "add", |x, y| x + y, true)?;
        Ok(self.push(out, Op::Add(self.id, other.id)))
    }

    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Sub`
    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.binary(other, "sub", |x, y| x - y, true)?;
        Ok(self.push(out, Op::Sub(self.id, other.id)))
    }

    /// Element-wise product; shapes must match exactly.
    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Mul`
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.binary(other, "mul", |x, y| x * y, false)?;
        Ok(self.push(out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let out = self.value().map(|x| s * x);
        self.push(out, Op::Scale(self.id, s))
    }

    pub fn activate(self, act: Activation) -> Var<'t> {
        let out = self.value().map(|x| act.apply(x));
        self.push(out, Op::Unary(self.id, act))
    }

    pub fn tanh(self) -> Var<'t> {
        self.activate(Activation::Tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.activate(Activation::Relu)
    }

    pub fn elu(self) -> Var<'t> {
        self.activate(Activation::Elu)
    }

    pub fn gelu(self) -> Var<'t> {
        self.activate(Activation::Gelu)
    }

    /// Mean over `axis`, keeping it as a length-1 dimension.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let out = match axis {
            0 => {
                let mut acc = vec![0.0; c];
                for i in 0..r {
                    acc.iter_mut().zip(x.row(i)).for_each(|(a, v)| *a += v);
                }
                Tensor::matrix(1, c, acc.into_iter().map(|v| v / r as f64).collect())
            }
            1 => Tensor::matrix(
                r,
                1,
                (0..r).map(|i| x.row(i).iter().sum::<f64>() / c as f64).collect(),
            ),
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "mean_axis",
                    detail: format!("axis {axis} out of range for shape {:?}", x.shape()),
                })
            }
        };
        Ok(self.push(out, Op::MeanAxis(self.id, axis)))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                detail: format!("axis {axis} range {start}..{} on shape {:?}", start + len, x.shape()),
            });
        }
        let out = if axis == 0 {
            Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&x.row(i)[start..start + len]);
            }
            Tensor::matrix(r, len, data)
        };
        Ok(self.push(
            out,
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
        ))
    }

    pub fn transpose(self) -> Var<'t> {
        let out = self.value().transpose_raw();
        self.push(out, Op::Transpose(self.id))
    }

    /// Mean squared error against `target`, as a scalar.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&target);
        let (a, b) = (self.value(), target.value());
        if a.shape() != b.shape() {
            return Err(mismatch("mse", &a, &b));
        }
        let n = a.numel() as f64;
        let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(self.id, target.id)))
    }

    /// Apply a fixed node-dimension operator (e.g. normalized adjacency).
    pub fn apply_operator(self, op: &Rc<dyn NodeOperator>) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if x.rows() != op.size() {
            return Err(TensorError::ShapeMismatch {
                op: "apply_operator",
                left: vec![op.size(), op.size()],
                right: x.shape().to_vec(),
            });
        }
        let out = op.apply(&x);
        Ok(self.push(out, Op::Operator(self.id, Rc::clone(op))))
    }

    /// Per-segment mean over rows: `n x d -> G x d`.
    pub fn segment_mean(self, seg: &Rc<Segments>) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if x.rows() != seg.total() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_mean",
                left: x.shape().to_vec(),
                right: vec![seg.total()],
            });
        }
        let c = x.cols();
        let mut data = vec![0.0; seg.count() * c];
        for s in 0..seg.count() {
            let range = seg.range(s);
            let len = range.len() as f64;
            let acc = &mut data[s * c..(s + 1) * c];
            for r in range {
                acc.iter_mut().zip(x.row(r)).for_each(|(a, v)| *a += v);
            }
            acc.iter_mut().for_each(|a| *a /= len);
        }
        Ok(self.push(
            Tensor::matrix(seg.count(), c, data),
            Op::SegmentMean(self.id, Rc::clone(seg)),
        ))
    }

    /// Scale each row of `self` by the coefficient of its segment;
    /// `coef` is `G x 1`.
    pub fn segment_scale(self, coef: Var<'t>, seg: &Rc<Segments>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&coef);
        let (x, k) = (self.value(), coef.value());
        if x.rows() != seg.total() || k.rows() != seg.count() || k.cols() != 1 {
            return Err(mismatch("segment_scale", &x, &k));
        }
        let c = x.cols();
        let mut data = x.data().to_vec();
        for s in 0..seg.count() {
            let factor = k.data()[s];
            for r in seg.range(s) {
                data[r * c..(r + 1) * c].iter_mut().for_each(|v| *v *= factor);
            }
        }
        Ok(self.push(
            Tensor::matrix(x.rows(), c, data),
            Op::SegmentScale(self.id, coef.id, Rc::clone(seg)),
        ))
    }

    /// Broadcast a `1 x d` row to `times x d`.
    pub fn repeat_rows(self, times: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if x.rows() != 1 || times == 0 {
            return Err(TensorError::InvalidArgument {
                op: "repeat_rows",
                detail: format!("need a single row and times > 0, got {:?} x {times}", x.shape()),
            });
        }
        let data = x.data().repeat(times);
        Ok(self.push(Tensor::matrix(times, x.cols(), data), Op::RepeatRows(self.id)))
    }

    /// Divide each row by its sum. Rows whose `|sum| < eps` become uniform
    /// `1 / cols` and pass no gradient.
    pub fn sum_normalize_rows(self, eps: f64) -> Var<'t> {
        let x = self.value();
        let c = x.cols();
        let mut data = Vec::with_capacity(x.numel());
        for r in 0..x.rows() {
            let row = x.row(r);
            let s: f64 = row.iter().sum();
            if s.abs() < eps {
                data.extend(std::iter::repeat_n(1.0 / c as f64, c));
            } else {
                data.extend(row.iter().map(|v| v / s));
            }
        }
        self.push(Tensor::matrix(x.rows(), c, data), Op::SumNormalize(self.id, eps))
    }

    /// Row-wise `x / max(1, sum |x|)`.
    pub fn l1_project_rows(self) -> Var<'t> {
        let x = self.value();
        let c = x.cols();
        let mut data = Vec::with_capacity(x.numel());
        for r in 0..x.rows() {
            let row = x.row(r);
            let s = row.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            data.extend(row.iter().map(|v| v / s));
        }
        self.push(Tensor::matrix(x.rows(), c, data), Op::L1Project(self.id))
    }
}
