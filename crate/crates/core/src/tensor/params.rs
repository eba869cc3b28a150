use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Store `grads` on the parameter tensors. Parameters absent from `grads`
    /// have their gradient cleared.
    pub fn set_grads(&mut self, grads: &Gradients) {
        for (i, v) in self.values.iter_mut().enumerate() {
            v.set_grad(grads.get(ParamId(i)).map(|g| g.data().to_vec()));
        }
    }

    /// Give every parameter without a gradient a zero gradient (parameters
    /// the loss does not depend on).
    pub fn fill_missing_grads(&mut self) {
        for v in &mut self.values {
            if v.grad().is_none() {
                let zeros = vec![0.0; v.numel()];
                v.set_grad(Some(zeros));
            }
        }
    }

    /// Flat snapshot, name -> (shape, data).
    pub fn to_snapshot(&self) -> Vec<ParamSnapshot> {
        self.iter()
            .map(|(_, name, t)| ParamSnapshot {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect()
    }

    /// Overwrite values from a snapshot with identical names and shapes.
    pub fn load_snapshot(&mut self, snap: &[ParamSnapshot]) -> Result<(), TensorError> {
        if snap.len() != self.len() {
            return Err(TensorError::InvalidArgument {
                op: "load_snapshot",
                detail: format!("expected {} parameters, found {}", self.len(), snap.len()),
            });
        }
        for (i, s) in snap.iter().enumerate() {
            if s.name != self.names[i] || s.shape != self.values[i].shape() {
                return Err(TensorError::InvalidArgument {
                    op: "load_snapshot",
                    detail: format!("parameter {i}: '{}' {:?} does not match '{}' {:?}",
                        s.name, s.shape, self.names[i], self.values[i].shape()),
                });
            }
            self.values[i] = Tensor::new(s.shape.clone(), s.data.clone())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub(crate) fn accumulate(&mut self, id: ParamId, g: Tensor) {
        match self.by_param.get_mut(&id) {
            Some(acc) => acc
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, b)| *a += b),
            None => {
                self.by_param.insert(id, g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}
