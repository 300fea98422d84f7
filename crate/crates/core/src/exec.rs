//! Executor abstraction: the network topology is written once, against
//! this trait, and runs in two modes.
//!
//! [`TapeExec`] records every operation on an autodiff tape and binds
//! parameters (by name) as gradient-carrying leaves — the training path.
//! [`EagerExec`] computes values immediately behind reference-counted
//! handles, so intermediates are freed as soon as the topology code drops
//! them — the inference path, whose working set stays near the largest
//! single activation instead of the whole forward history.

use std::rc::Rc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::graph::{GraphBase, VarId};
use crate::net::weights::WeightStoreBase;
use crate::num::Scalar;
use crate::ops;
use crate::tensor::{ConvSpec, TensorBase};

/// One operation-recording backend. Parameters are addressed by layer
/// name: a conv layer `name` uses `name.weight` / `name.bias`, a dense
/// layer `name.weight`, a PReLU `name.alpha`.
pub trait Exec<T: Scalar> {
    type Ref: Clone;

    fn input(&mut self, value: TensorBase<T>) -> Result<Self::Ref>;
    fn conv(&mut self, x: &Self::Ref, name: &str, spec: &ConvSpec) -> Result<Self::Ref>;
    fn dense(&mut self, x: &Self::Ref, name: &str) -> Result<Self::Ref>;
    fn prelu(&mut self, x: &Self::Ref, name: &str) -> Result<Self::Ref>;
    fn add(&mut self, a: &Self::Ref, b: &Self::Ref) -> Result<Self::Ref>;
    fn scale_channels(&mut self, x: &Self::Ref, s: &Self::Ref) -> Result<Self::Ref>;
    fn global_avg_pool(&mut self, x: &Self::Ref) -> Result<Self::Ref>;
    fn softmax_levels(&mut self, x: &Self::Ref, levels: usize) -> Result<Self::Ref>;
    fn concat(&mut self, parts: &[Self::Ref]) -> Result<Self::Ref>;
    fn slice(&mut self, x: &Self::Ref, start: usize, len: usize) -> Result<Self::Ref>;
    fn pixel_shuffle(&mut self, x: &Self::Ref, r: usize) -> Result<Self::Ref>;
    /// Reads the computed value behind a handle.
    fn value<'a>(&'a self, x: &'a Self::Ref) -> &'a TensorBase<T>;
}

/// Tape-backed executor for training and gradient checks.
pub struct TapeExec<'s, T: Scalar> {
    graph: GraphBase<T>,
    store: &'s WeightStoreBase<T>,
    bound: IndexMap<String, VarId>,
}

impl<'s, T: Scalar> TapeExec<'s, T> {
    pub fn new(store: &'s WeightStoreBase<T>) -> Self {
        TapeExec {
            graph: GraphBase::new(),
            store,
            bound: IndexMap::new(),
        }
    }

    /// Fetches (or reuses) the tape leaf for a named parameter.
    fn param(&mut self, name: &str) -> Result<VarId> {
        if let Some(id) = self.bound.get(name) {
            return Ok(*id);
        }
        let tensor = self.store.get(name)?.clone();
        let id = self.graph.leaf(tensor, true)?;
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    /// Records the L1 loss of `pred` against a constant target.
    pub fn l1_loss(&mut self, pred: VarId, target: TensorBase<T>) -> Result<VarId> {
        let t = self.graph.leaf(target, false)?;
        self.graph.l1_loss(pred, t)
    }

    pub fn scalar_value(&self, id: VarId) -> T {
        self.graph.value(id).data()[0]
    }

    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        self.graph.backward(loss)
    }

    /// Hands out the gradient of every bound parameter, in binding order.
    /// Parameters the loss never reached are reported as an error — the
    /// architecture has no intentionally dead branches.
    pub fn gradients(&mut self) -> Result<IndexMap<String, TensorBase<T>>> {
        let mut out = IndexMap::new();
        for (name, id) in &self.bound {
            match self.graph.take_grad(*id) {
                Some(g) => {
                    out.insert(name.clone(), g);
                }
                None => {
                    return Err(Error::Config(format!(
                        "parameter {name:?} received no gradient"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Direct tape access (tests compose custom losses).
    pub fn graph_mut(&mut self) -> &mut GraphBase<T> {
        &mut self.graph
    }
}

impl<'s, T: Scalar> Exec<T> for TapeExec<'s, T> {
    type Ref = VarId;

    fn input(&mut self, value: TensorBase<T>) -> Result<VarId> {
        self.graph.leaf(value, false)
    }

    fn conv(&mut self, x: &VarId, name: &str, spec: &ConvSpec) -> Result<VarId> {
        let w = self.param(&format!("{name}.weight"))?;
        let b = if spec.bias {
            Some(self.param(&format!("{name}.bias"))?)
        } else {
            None
        };
        self.graph.conv2d(*x, w, b, spec)
    }

    fn dense(&mut self, x: &VarId, name: &str) -> Result<VarId> {
        let w = self.param(&format!("{name}.weight"))?;
        self.graph.dense(*x, w)
    }

    fn prelu(&mut self, x: &VarId, name: &str) -> Result<VarId> {
        let alpha = self.param(&format!("{name}.alpha"))?;
        self.graph.prelu(*x, alpha)
    }

    fn add(&mut self, a: &VarId, b: &VarId) -> Result<VarId> {
        self.graph.add(*a, *b)
    }

    fn scale_channels(&mut self, x: &VarId, s: &VarId) -> Result<VarId> {
        self.graph.scale_channels(*x, *s)
    }

    fn global_avg_pool(&mut self, x: &VarId) -> Result<VarId> {
        self.graph.global_avg_pool(*x)
    }

    fn softmax_levels(&mut self, x: &VarId, levels: usize) -> Result<VarId> {
        self.graph.softmax_levels(*x, levels)
    }

    fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        self.graph.concat(parts)
    }

    fn slice(&mut self, x: &VarId, start: usize, len: usize) -> Result<VarId> {
        self.graph.slice(*x, start, len)
    }

    fn pixel_shuffle(&mut self, x: &VarId, r: usize) -> Result<VarId> {
        self.graph.pixel_shuffle(*x, r)
    }

    fn value<'a>(&'a self, x: &'a VarId) -> &'a TensorBase<T> {
        self.graph.value(*x)
    }
}

/// Immediate-mode executor for inference.
pub struct EagerExec<'s, T: Scalar> {
    store: &'s WeightStoreBase<T>,
}

impl<'s, T: Scalar> EagerExec<'s, T> {
    pub fn new(store: &'s WeightStoreBase<T>) -> Self {
        EagerExec { store }
    }

    fn wrap(value: TensorBase<T>, op: &'static str) -> Result<Rc<TensorBase<T>>> {
        value.ensure_finite(op)?;
        Ok(Rc::new(value))
    }
}

impl<'s, T: Scalar> Exec<T> for EagerExec<'s, T> {
    type Ref = Rc<TensorBase<T>>;

    fn input(&mut self, value: TensorBase<T>) -> Result<Self::Ref> {
        Self::wrap(value, "input")
    }

    fn conv(&mut self, x: &Self::Ref, name: &str, spec: &ConvSpec) -> Result<Self::Ref> {
        let w = self.store.get(&format!("{name}.weight"))?;
        let b = if spec.bias {
            Some(self.store.get(&format!("{name}.bias"))?.data())
        } else {
            None
        };
        Self::wrap(ops::conv2d(x, w, b, spec)?, "conv2d")
    }

    fn dense(&mut self, x: &Self::Ref, name: &str) -> Result<Self::Ref> {
        let w = self.store.get(&format!("{name}.weight"))?;
        Self::wrap(ops::dense(x, w, None)?, "dense")
    }

    fn prelu(&mut self, x: &Self::Ref, name: &str) -> Result<Self::Ref> {
        let alpha = self.store.get(&format!("{name}.alpha"))?;
        Self::wrap(ops::prelu(x, alpha.data())?, "prelu")
    }

    fn add(&mut self, a: &Self::Ref, b: &Self::Ref) -> Result<Self::Ref> {
        Self::wrap(ops::add(a, b)?, "add")
    }

    fn scale_channels(&mut self, x: &Self::Ref, s: &Self::Ref) -> Result<Self::Ref> {
        Self::wrap(ops::scale_channels(x, s)?, "scale_channels")
    }

    fn global_avg_pool(&mut self, x: &Self::Ref) -> Result<Self::Ref> {
        Self::wrap(ops::global_avg_pool(x)?, "global_avg_pool")
    }

    fn softmax_levels(&mut self, x: &Self::Ref, levels: usize) -> Result<Self::Ref> {
        Self::wrap(ops::softmax_levels(x, levels)?, "softmax_levels")
    }

    fn concat(&mut self, parts: &[Self::Ref]) -> Result<Self::Ref> {
        let tensors: Vec<&TensorBase<T>> = parts.iter().map(|p| &**p).collect();
        Self::wrap(ops::concat_channels(&tensors)?, "concat")
    }

    fn slice(&mut self, x: &Self::Ref, start: usize, len: usize) -> Result<Self::Ref> {
        Self::wrap(ops::slice_channels(x, start, len)?, "slice")
    }

    fn pixel_shuffle(&mut self, x: &Self::Ref, r: usize) -> Result<Self::Ref> {
        Self::wrap(ops::pixel_shuffle(x, r)?, "pixel_shuffle")
    }

    fn value<'a>(&'a self, x: &'a Self::Ref) -> &'a TensorBase<T> {
        x
    }
}
