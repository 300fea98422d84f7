//! Reverse-mode automatic differentiation over a recorded forward pass.
//!
//! A graph is a tape: every operation appends a node holding its output
//! value and the ids of its inputs. [`GraphBase::backward`] walks the tape
//! once in reverse, accumulating gradients into every node that
//! (transitively) requires them. Leaf gradients are retained for the
//! optimizer; interior gradients are dropped as soon as their node has
//! been processed, keeping peak memory near the forward footprint.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::ops;
use crate::tensor::{ConvSpec, TensorBase};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(u32);

impl VarId {
    fn i(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv { x: VarId, w: VarId, b: Option<VarId>, spec: ConvSpec },
    Dense { x: VarId, w: VarId },
    PRelu { x: VarId, alpha: VarId },
    Add { a: VarId, b: VarId },
    ScaleChannels { x: VarId, s: VarId },
    GlobalAvgPool { x: VarId },
    SoftmaxLevels { x: VarId, levels: usize },
    Concat { parts: Vec<VarId> },
    Slice { x: VarId, start: usize },
    PixelShuffle { x: VarId, r: usize },
    PixelUnshuffle { x: VarId, r: usize },
    L1Loss { a: VarId, b: VarId },
    Sum { x: VarId },
}

/// Wengert-list autodiff graph over `T`-valued tensors.
pub struct GraphBase<T: Scalar> {
    values: Vec<TensorBase<T>>,
    grads: Vec<Option<TensorBase<T>>>,
    requires: Vec<bool>,
    ops: Vec<Op>,
    consumed: bool,
}

impl<T: Scalar> Default for GraphBase<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphBase<T> {
    pub fn new() -> Self {
        GraphBase {
            values: Vec::new(),
            grads: Vec::new(),
            requires: Vec::new(),
            ops: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: TensorBase<T>, op: Op, requires: bool, name: &'static str) -> Result<VarId> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        value.ensure_finite(name)?;
        let id = VarId(self.values.len() as u32);
        self.values.push(value);
        self.grads.push(None);
        self.requires.push(requires);
        self.ops.push(op);
        Ok(id)
    }

    fn req(&self, id: VarId) -> bool {
        self.requires[id.i()]
    }

    fn val(&self, id: VarId) -> &TensorBase<T> {
        &self.values[id.i()]
    }

    /// Adds an input node. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: TensorBase<T>, requires_grad: bool) -> Result<VarId> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    pub fn value(&self, id: VarId) -> &TensorBase<T> {
        self.val(id)
    }

    /// Gradient of the last `backward` call; `None` for nodes without one
    /// (interior nodes have theirs dropped after use).
    pub fn grad(&self, id: VarId) -> Option<&TensorBase<T>> {
        self.grads[id.i()].as_ref()
    }

    /// Removes and returns a node's gradient (optimizer hand-off).
    pub fn take_grad(&mut self, id: VarId) -> Option<TensorBase<T>> {
        self.grads[id.i()].take()
    }

    pub fn conv2d(&mut self, x: VarId, w: VarId, b: Option<VarId>, spec: &ConvSpec) -> Result<VarId> {
        let value = ops::conv2d(
            self.val(x),
            self.val(w),
            b.map(|id| self.val(id).data()),
            spec,
        )?;
        let requires = self.req(x) || self.req(w) || b.is_some_and(|id| self.req(id));
        self.push(value, Op::Conv { x, w, b, spec: *spec }, requires, "conv2d")
    }

    /// Bias-free dense layer on (N,C,1,1) vectors.
    pub fn dense(&mut self, x: VarId, w: VarId) -> Result<VarId> {
        let value = ops::dense(self.val(x), self.val(w), None)?;
        let requires = self.req(x) || self.req(w);
        self.push(value, Op::Dense { x, w }, requires, "dense")
    }

    /// `alpha` must be a (1,C,1,1) leaf of per-channel slopes.
    pub fn prelu(&mut self, x: VarId, alpha: VarId) -> Result<VarId> {
        let value = ops::prelu(self.val(x), self.val(alpha).data())?;
        let requires = self.req(x) || self.req(alpha);
        self.push(value, Op::PRelu { x, alpha }, requires, "prelu")
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = ops::add(self.val(a), self.val(b))?;
        let requires = self.req(a) || self.req(b);
        self.push(value, Op::Add { a, b }, requires, "add")
    }

    pub fn scale_channels(&mut self, x: VarId, s: VarId) -> Result<VarId> {
        let value = ops::scale_channels(self.val(x), self.val(s))?;
        let requires = self.req(x) || self.req(s);
        self.push(value, Op::ScaleChannels { x, s }, requires, "scale_channels")
    }

    pub fn global_avg_pool(&mut self, x: VarId) -> Result<VarId> {
        let value = ops::global_avg_pool(self.val(x))?;
        let requires = self.req(x);
        self.push(value, Op::GlobalAvgPool { x }, requires, "global_avg_pool")
    }

    pub fn softmax_levels(&mut self, x: VarId, levels: usize) -> Result<VarId> {
        let value = ops::softmax_levels(self.val(x), levels)?;
        let requires = self.req(x);
        self.push(value, Op::SoftmaxLevels { x, levels }, requires, "softmax_levels")
    }

    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        let tensors: Vec<&TensorBase<T>> = parts.iter().map(|&p| self.val(p)).collect();
        let value = ops::concat_channels(&tensors)?;
        let requires = parts.iter().any(|&p| self.req(p));
        self.push(value, Op::Concat { parts: parts.to_vec() }, requires, "concat")
    }

    pub fn slice(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let value = ops::slice_channels(self.val(x), start, len)?;
        let requires = self.req(x);
        self.push(value, Op::Slice { x, start }, requires, "slice")
    }

    pub fn pixel_shuffle(&mut self, x: VarId, r: usize) -> Result<VarId> {
        let value = ops::pixel_shuffle(self.val(x), r)?;
        let requires = self.req(x);
        self.push(value, Op::PixelShuffle { x, r }, requires, "pixel_shuffle")
    }

    pub fn pixel_unshuffle(&mut self, x: VarId, r: usize) -> Result<VarId> {
        let value = ops::pixel_unshuffle(self.val(x), r)?;
        let requires = self.req(x);
        self.push(value, Op::PixelUnshuffle { x, r }, requires, "pixel_unshuffle")
    }

    pub fn l1_loss(&mut self, pred: VarId, target: VarId) -> Result<VarId> {
        let value = ops::l1_loss(self.val(pred), self.val(target))?;
        let requires = self.req(pred) || self.req(target);
        self.push(value, Op::L1Loss { a: pred, b: target }, requires, "l1_loss")
    }

    pub fn sum_all(&mut self, x: VarId) -> Result<VarId> {
        let value = ops::sum_all(self.val(x));
        let requires = self.req(x);
        self.push(value, Op::Sum { x }, requires, "sum")
    }

    fn accum(&mut self, id: VarId, delta: TensorBase<T>) {
        if !self.req(id) {
            return;
        }
        let slot = &mut self.grads[id.i()];
        match slot {
            Some(g) => {
                for (gv, &dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            None => *slot = Some(delta),
        }
    }

    /// Propagates gradients from the scalar node `loss` back to every leaf
    /// that requires them. Consumes the tape: recording or a second
    /// backward afterwards fails with [`Error::TapeConsumed`].
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let ls = self.val(loss).shape();
        if ls.numel() != 1 {
            return Err(Error::NonScalarLoss(ls.to_string()));
        }
        if !self.req(loss) {
            return Ok(());
        }
        self.grads[loss.i()] = Some(TensorBase::scalar(T::one()));
        for idx in (0..=loss.i()).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            let op = self.ops[idx].clone();
            match &op {
                Op::Leaf => {}
                Op::Conv { x, w, b, spec } => {
                    let grads = ops::conv2d_backward(
                        self.val(*x),
                        self.val(*w),
                        spec,
                        &g,
                        self.req(*x),
                        self.req(*w),
                    )?;
                    if let Some(gx) = grads.x {
                        self.accum(*x, gx);
                    }
                    if let Some(gw) = grads.w {
                        self.accum(*w, gw);
                    }
                    if let (Some(bid), Some(gb)) = (*b, grads.b) {
                        let gb = TensorBase::from_vec(self.val(bid).shape(), gb)?;
                        self.accum(bid, gb);
                    }
                }
                Op::Dense { x, w } => {
                    let (gx, gw, _) = ops::dense_backward(self.val(*x), self.val(*w), &g, false)?;
                    self.accum(*x, gx);
                    self.accum(*w, gw);
                }
                Op::PRelu { x, alpha } => {
                    let (gx, ga) =
                        ops::prelu_backward(self.val(*x), self.val(*alpha).data(), &g)?;
                    let ga = TensorBase::from_vec(self.val(*alpha).shape(), ga)?;
                    self.accum(*x, gx);
                    self.accum(*alpha, ga);
                }
                Op::Add { a, b } => {
                    self.accum(*a, g.clone());
                    self.accum(*b, g.clone());
                }
                Op::ScaleChannels { x, s } => {
                    let (gx, gs) = ops::scale_channels_backward(self.val(*x), self.val(*s), &g)?;
                    self.accum(*x, gx);
                    self.accum(*s, gs);
                }
                Op::GlobalAvgPool { x } => {
                    let gx = ops::global_avg_pool_backward(self.val(*x).shape(), &g)?;
                    self.accum(*x, gx);
                }
                Op::SoftmaxLevels { x, levels } => {
                    let gx = ops::softmax_levels_backward(&self.values[idx], &g, *levels)?;
                    self.accum(*x, gx);
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let width = self.val(p).shape().c;
                        let delta = ops::slice_channels(&g, off, width)?;
                        self.accum(p, delta);
                        off += width;
                    }
                }
                Op::Slice { x, start } => {
                    let xs = self.val(*x).shape();
                    let gs = g.shape();
                    let mut delta = TensorBase::zeros(xs);
                    for n in 0..gs.n {
                        for c in 0..gs.c {
                            delta.plane_mut(n, start + c).copy_from_slice(g.plane(n, c));
                        }
                    }
                    self.accum(*x, delta);
                }
                Op::PixelShuffle { x, r } => {
                    let gx = ops::pixel_unshuffle(&g, *r)?;
                    self.accum(*x, gx);
                }
                Op::PixelUnshuffle { x, r } => {
                    let gx = ops::pixel_shuffle(&g, *r)?;
                    self.accum(*x, gx);
                }
                Op::L1Loss { a, b } => {
                    let up = g.data()[0];
                    let ga = ops::l1_loss_backward(self.val(*a), self.val(*b), up)?;
                    if self.req(*b) {
                        let gb = ga.map(|v| -v);
                        self.accum(*b, gb);
                    }
                    self.accum(*a, ga);
                }
                Op::Sum { x } => {
                    let up = g.data()[0];
                    let gx = TensorBase::filled(self.val(*x).shape(), up);
                    self.accum(*x, gx);
                }
            }
            // Keep leaf gradients for the caller; interior ones are spent.
            if matches!(op, Op::Leaf) {
                self.grads[idx] = Some(g);
            }
        }
        Ok(())
    }
}
