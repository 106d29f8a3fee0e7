//! Dense row-major tensors with reverse-mode differentiation.
//!
//! Every op produces a new immutable [`Tensor`]. When any input requires a
//! gradient the output keeps a [`ComputeNode`]-style record (op kind, input
//! handles, backward closure) so [`Tensor::backward`] can replay the graph in
//! reverse topological order. Parameters are leaf tensors; the only mutable
//! state on a tensor is its gradient accumulator.
//!
//! Convolutions are cross-correlations (no kernel flip), the deep-learning
//! convention.

mod conv;
pub(crate) mod gemm;
mod ops;

pub use conv::{output_extents, PoolKind};

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Backward closure: `(output data, output grad, which inputs need grads)`
/// to one optional gradient per input.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct ComputeNode {
    kind: &'static str,
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<ComputeNode>,
}

/// Shared handle to an immutable tensor value.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("op", &self.op_kind())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, false)
    }

    /// Leaf tensor that accumulates gradients.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, true)
    }

    pub fn leaf(data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Usage(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::Shape {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self::raw(data, shape.to_vec(), requires_grad, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::raw(vec![0.0; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::raw(vec![value], vec![1], false, None)
    }

    fn raw(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, node: Option<ComputeNode>) -> Self {
        Tensor(Rc::new(Inner {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node,
        }))
    }

    /// Output of an op. The backward closure is dropped when no input needs a
    /// gradient, so inference graphs hold no history.
    pub(crate) fn from_op<F>(
        data: Vec<f64>,
        shape: Vec<usize>,
        kind: &'static str,
        inputs: Vec<Tensor>,
        backward: F,
    ) -> Self
    where
        F: Fn(&[f64], &[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        debug_assert_eq!(numel(&shape), data.len(), "{kind}");
        let requires_grad = inputs.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| ComputeNode {
            kind,
            inputs,
            backward: Box::new(backward),
        });
        Self::raw(data, shape, requires_grad, node)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Kind of the op that produced this tensor, `None` for leaves and for
    /// outputs computed without gradient tracking.
    pub fn op_kind(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.kind)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.0.data[0]
    }

    /// Same values, no history, no gradient.
    pub fn detach(&self) -> Tensor {
        Self::raw(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    fn key(&self) -> *const Inner {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Gradients are accumulated into every reachable tensor that requires
    /// one; calling twice without [`Tensor::zero_grad`] adds both passes.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage("backward root does not depend on any parameter".into()));
        }

        // post-order DFS; each node appears once
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<*const Inner> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for input in &node.inputs {
                    if input.requires_grad() && !visited.contains(&input.key()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }

        let mut pending: HashMap<*const Inner, Vec<f64>> = HashMap::new();
        pending.insert(self.key(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.key()) else {
                continue;
            };
            if let Some(node) = &t.0.node {
                let needs: Vec<bool> = node.inputs.iter().map(Tensor::requires_grad).collect();
                let input_grads = (node.backward)(&t.0.data, &g, &needs);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.kind);
                for ((input, gi), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                    let Some(gi) = gi else { continue };
                    if !need {
                        continue;
                    }
                    debug_assert_eq!(gi.len(), input.numel(), "{}", node.kind);
                    match pending.get_mut(&input.key()) {
                        Some(acc) => add_into(acc, &gi),
                        None => {
                            pending.insert(input.key(), gi);
                        }
                    }
                }
            }
            let mut slot = t.0.grad.borrow_mut();
            match slot.as_mut() {
                Some(acc) => add_into(acc, &g),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

pub(crate) fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

thread_local! {
    static KINKS: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Runs `f` while hashing every branch decision taken by non-smooth ops
/// (ReLU sign, max-pool argmax). Two evaluations with equal signatures lie on
/// the same smooth piece, which is what finite-difference checks need.
pub fn with_kink_signature<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let prev = KINKS.with(|k| k.replace(Some(0xcbf2_9ce4_8422_2325)));
    let out = f();
    let sig = KINKS.with(|k| k.replace(prev)).unwrap_or(0);
    (out, sig)
}

pub(crate) fn kink_tracking() -> bool {
    KINKS.with(|k| k.get().is_some())
}

pub(crate) fn record_kinks(decisions: impl Iterator<Item = u64>) {
    KINKS.with(|k| {
        if let Some(mut h) = k.get() {
            for d in decisions {
                h = (h ^ d).wrapping_mul(0x0000_0100_0000_01b3);
            }
            k.set(Some(h));
        }
    });
}
