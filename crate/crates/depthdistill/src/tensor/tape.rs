//! Operation tape for reverse-mode differentiation.
//!
//! Every differentiable op appends one node holding its output tensor
//! and a backprop closure. Appending order is a topological order by
//! construction, so the backward pass is a single reverse sweep. Each
//! node's output gradient is consumed when the node is processed, which
//! makes repeated `backward` calls on different roots independent as
//! long as they reach disjoint parameters.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use std::cell::RefCell;

struct Node<T> {
    out: Tensor<T>,
    backprop: Box<dyn Fn(&[T])>,
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
}

impl<T: Scalar> Tape<T> {
    /// Recording tape for training/gradcheck forward passes.
    pub fn new() -> Tape<T> {
        Tape { nodes: RefCell::new(Vec::new()), recording: true }
    }

    /// Non-recording tape for pure inference; ops run but record nothing.
    pub fn inference() -> Tape<T> {
        Tape { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Record `out` as produced from inputs whose gradients `backprop`
    /// accumulates. Call only when at least one input requires grad.
    pub(crate) fn push(&self, out: &Tensor<T>, backprop: Box<dyn Fn(&[T])>) {
        debug_assert!(self.recording);
        out.set_requires_grad(true);
        self.nodes.borrow_mut().push(Node { out: out.clone(), backprop });
    }

    /// Whether an op with the given inputs should be recorded.
    pub(crate) fn should_record(&self, inputs: &[&Tensor<T>]) -> bool {
        self.recording && inputs.iter().any(|t| t.requires_grad())
    }

    /// Reverse sweep from a scalar root. Gradients land in the `grad`
    /// buffers of every tensor that requires grad and influenced root.
    pub fn backward(&self, root: &Tensor<T>) -> Result<()> {
        if root.numel() != 1 {
            return Err(Error::shape(format!(
                "backward root must be scalar, got {}",
                root.shape()
            )));
        }
        if !root.item().is_finite() {
            return Err(Error::numeric(format!("backward from non-finite loss {}", root.item())));
        }
        if !root.requires_grad() {
            // Constant root: nothing to propagate.
            return Ok(());
        }
        root.accum_grad(&[T::one()]);
        let nodes = self.nodes.borrow();
        for node in nodes.iter().rev() {
            if let Some(gout) = node.out.take_grad() {
                (node.backprop)(&gout);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn fan_out_gradients_add() {
        // f(x) = sum(x*x + x); df/dx = 2x + 1
        let tape = Tape::new();
        let x = Tensor::<f64>::from_vec([3], vec![1.0, -2.0, 0.5]).unwrap().requires_grad_(true);
        let sq = ops::mul(&tape, &x, &x).unwrap();
        let s = ops::add(&tape, &sq, &x).unwrap();
        let loss = ops::sum_all(&tape, &s).unwrap();
        tape.backward(&loss).unwrap();
        let g = x.grad().unwrap();
        assert_eq!(g, vec![3.0, -3.0, 2.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_an_error() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::ones([2]).requires_grad_(true);
        assert!(tape.backward(&x).is_err());
    }

    #[test]
    fn two_roots_reach_disjoint_leaves_independently() {
        let tape = Tape::new();
        let a = Tensor::<f64>::from_vec([2], vec![1.0, 2.0]).unwrap().requires_grad_(true);
        let b = Tensor::<f64>::from_vec([2], vec![3.0, 4.0]).unwrap().requires_grad_(true);
        let la = ops::sum_all(&tape, &ops::mul(&tape, &a, &a).unwrap()).unwrap();
        let lb = ops::sum_all(&tape, &b).unwrap();
        tape.backward(&la).unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0, 4.0]);
        assert!(b.grad().is_none());
        tape.backward(&lb).unwrap();
        // First root's leaf grads untouched by the second sweep.
        assert_eq!(a.grad().unwrap(), vec![2.0, 4.0]);
        assert_eq!(b.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::inference();
        let x = Tensor::<f64>::ones([2]).requires_grad_(true);
        let y = ops::mul(&tape, &x, &x).unwrap();
        assert!(!y.requires_grad());
        assert!(tape.is_empty());
    }
}
