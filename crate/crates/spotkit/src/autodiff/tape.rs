//! Wengert-list tape for reverse-mode differentiation.
//!
//! Ops push nodes in execution order; every node's inputs were created
//! before it, so one reverse sweep visits each node exactly once. Gradient
//! accumulation order is fixed by the recording order, which makes backward
//! bit-deterministic on identical tapes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{Tensor, TensorId};

/// Gradient sink passed to backward rules.
pub struct Grads<T: Scalar> {
    map: HashMap<TensorId, Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    fn new() -> Self {
        Grads {
            map: HashMap::new(),
        }
    }

    /// Add `delta` to the gradient of `target`. No-op for tensors outside
    /// the differentiable graph.
    pub fn accumulate(&mut self, target: &Tensor<T>, delta: &[T]) {
        if !target.requires_grad() {
            return;
        }
        debug_assert_eq!(delta.len(), target.numel());
        match self.map.get_mut(&target.id()) {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => {
                self.map.insert(target.id(), delta.to_vec());
            }
        }
    }

    /// Like `accumulate` but takes ownership to avoid a copy on first write.
    pub fn accumulate_owned(&mut self, target: &Tensor<T>, delta: Vec<T>) {
        if !target.requires_grad() {
            return;
        }
        debug_assert_eq!(delta.len(), target.numel());
        match self.map.get_mut(&target.id()) {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(&delta) {
                    *gi += *di;
                }
            }
            None => {
                self.map.insert(target.id(), delta);
            }
        }
    }

    fn take(&mut self, id: TensorId) -> Option<Vec<T>> {
        self.map.remove(&id)
    }
}

type BackwardRule<T> = Box<dyn Fn(&[T], &mut Grads<T>)>;

struct Node<T: Scalar> {
    op: &'static str,
    output: TensorId,
    output_len: usize,
    rule: BackwardRule<T>,
}

struct TapeInner<T: Scalar> {
    nodes: Vec<Node<T>>,
    watched: Vec<Tensor<T>>,
    check_finite: bool,
    poisoned: Option<&'static str>,
}

/// Recording context for one differentiable computation.
pub struct Tape<T: Scalar> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Scalar> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                watched: Vec::new(),
                check_finite: false,
                poisoned: None,
            })),
        }
    }

    /// Enable per-node finiteness checks during backward (used by the
    /// gradient checker to report the offending op).
    pub fn with_finite_checks() -> Self {
        let t = Tape::new();
        t.inner.borrow_mut().check_finite = true;
        t
    }

    /// Register a leaf so backward fills its grad slot even when the loss
    /// does not reach it (zero grad in that case).
    pub fn watch(&self, t: &Tensor<T>) {
        debug_assert!(t.requires_grad(), "watched leaves must require grad");
        self.inner.borrow_mut().watched.push(t.clone());
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Record a backward rule for `output`. Called by ops after computing
    /// the forward value; `rule` receives the upstream gradient of `output`
    /// and accumulates into the op's inputs.
    pub fn record(
        &self,
        op: &'static str,
        output: &Tensor<T>,
        rule: impl Fn(&[T], &mut Grads<T>) + 'static,
    ) {
        debug_assert!(output.requires_grad(), "recorded outputs must require grad");
        let mut inner = self.inner.borrow_mut();
        if inner.check_finite && inner.poisoned.is_none() && !output.is_finite() {
            inner.poisoned = Some(op);
        }
        inner.nodes.push(Node {
            op,
            output: output.id(),
            output_len: output.numel(),
            rule: Box::new(rule),
        });
    }

    /// First op that produced a non-finite output (finite-check tapes only).
    pub fn poisoned_op(&self) -> Option<&'static str> {
        self.inner.borrow().poisoned
    }

    /// Reverse sweep from a scalar `loss`. Populates the grad slot of every
    /// watched leaf; leaves the tape intact (a second backward on the same
    /// tape recomputes identical grads).
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::NonScalarLoss(loss.numel()));
        }
        let inner = self.inner.borrow();
        let mut grads = Grads::new();
        grads.map.insert(loss.id(), vec![T::one()]);

        for node in inner.nodes.iter().rev() {
            let Some(g) = grads.take(node.output) else {
                continue;
            };
            debug_assert_eq!(g.len(), node.output_len);
            if inner.check_finite && !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    op: node.op,
                    detail: "non-finite upstream gradient".to_string(),
                });
            }
            (node.rule)(&g, &mut grads);
        }

        for leaf in &inner.watched {
            let g = grads
                .take(leaf.id())
                .unwrap_or_else(|| vec![T::zero(); leaf.numel()]);
            leaf.set_grad(Some(g));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![1.0, 2.0, 3.0], vec![3]);
        tape.watch(&x);
        let loss = ops::sum(&tape, &x).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_times_x_gives_zero_grad() {
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![1.0, -2.0, 3.0], vec![3]);
        tape.watch(&x);
        let zero = Tensor::scalar_value(0.0);
        let y = ops::mul(&tape, &x, &zero).unwrap();
        let loss = ops::sum(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn quadratic_gradient() {
        // loss = x*x/2 at x=3 -> grad = 3
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![3.0], vec![]);
        tape.watch(&x);
        let sq = ops::mul(&tape, &x, &x).unwrap();
        let half = Tensor::scalar_value(0.5);
        let loss = ops::mul(&tape, &sq, &half).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0]);
    }

    #[test]
    fn unreachable_watched_leaf_gets_zeros() {
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![1.0, 2.0], vec![2]);
        let y = Tensor::<f64>::param(vec![5.0], vec![]);
        tape.watch(&x);
        tape.watch(&y);
        let loss = ops::sum(&tape, &x).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(y.grad().unwrap(), vec![0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![1.0, 2.0], vec![2]);
        tape.watch(&x);
        assert!(matches!(
            tape.backward(&x),
            Err(Error::NonScalarLoss(2))
        ));
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let tape = Tape::new();
            let x = Tensor::<f64>::param(vec![0.3, -1.7, 2.9, 0.01], vec![2, 2]);
            tape.watch(&x);
            let y = ops::softmax(&tape, &x).unwrap();
            let z = ops::mul(&tape, &y, &x).unwrap();
            let loss = ops::sum(&tape, &z).unwrap();
            tape.backward(&loss).unwrap();
            x.grad().unwrap()
        };
        let a = run();
        let b = run();
        // bit-identical, not merely close
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
