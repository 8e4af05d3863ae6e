//! Named parameter storage shared by networks and optimizers.

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Network weights `w` versus architecture weights `α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Weight,
    Arch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Which parameter groups receive gradients when a store is bound to a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub weights: bool,
    pub arch: bool,
}

impl Trainable {
    pub const NONE: Trainable = Trainable {
        weights: false,
        arch: false,
    };
    pub const ALL: Trainable = Trainable {
        weights: true,
        arch: true,
    };

    fn includes(self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Weight => self.weights,
            ParamGroup::Arch => self.arch,
        }
    }
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.into(),
            group,
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of scalar entries in `group`.
    pub fn count(&self, group: ParamGroup) -> usize {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.len())
            .sum()
    }

    /// Records every parameter as a leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape, trainable: Trainable) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable.includes(p.group)))
            .collect();
        Bound { vars }
    }

    /// Adds the gradients of every bound parameter to its `grad` buffer.
    /// Buffers keep accumulating until [`ParamStore::zero_grad`].
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) {
        for (p, &var) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(var) {
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Copies values for every parameter whose name also exists in `source`.
    pub fn copy_matching(&mut self, source: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(id) = source.find(&p.name) {
                let src = &source.get(id).value;
                if src.shape() != p.value.shape() {
                    return Err(shape_err!(
                        "parameter {} has shape {:?}, source has {:?}",
                        p.name,
                        p.value.shape(),
                        src.shape()
                    ));
                }
                p.value = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_backward_accumulates_until_zeroed() {
        let mut store = ParamStore::new();
        let id = store.add("x", ParamGroup::Weight, Tensor::from_vec(vec![3.0]));
        for expected in [6.0, 12.0] {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape, Trainable::ALL);
            let x = bound.var(id);
            let sq = tape.mul(x, x).unwrap();
            let loss = tape.mean(sq).unwrap();
            let grads = tape.backward(loss).unwrap();
            store.accumulate(&bound, &grads);
            assert_eq!(store.get(id).grad, vec![expected]);
        }
        store.zero_grad();
        assert_eq!(store.get(id).grad, vec![0.0]);
    }

    #[test]
    fn frozen_groups_get_no_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamGroup::Weight, Tensor::from_vec(vec![2.0]));
        let a = store.add("a", ParamGroup::Arch, Tensor::from_vec(vec![5.0]));
        let mut tape = Tape::new();
        let bound = store.bind(
            &mut tape,
            Trainable {
                weights: true,
                arch: false,
            },
        );
        let p = tape.mul(bound.var(w), bound.var(a)).unwrap();
        let grads = tape.backward(p).unwrap();
        store.accumulate(&bound, &grads);
        assert_eq!(store.get(w).grad, vec![5.0]);
        assert_eq!(store.get(a).grad, vec![0.0]);
    }
}
