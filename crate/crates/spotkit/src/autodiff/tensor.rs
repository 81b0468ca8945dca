//! Dense tensors with an optional gradient slot.
//!
//! A [`Tensor`] is an immutable (shape, values) pair behind an `Rc`; only the
//! `grad` slot is interior-mutable, and only `backward` writes it. Cloning a
//! tensor is cheap and shares storage.

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub type TensorId = u64;

/// Number of elements implied by a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn shape_string(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(","))
}

struct TensorData<T: Scalar> {
    id: TensorId,
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
}

pub struct Tensor<T: Scalar> {
    data: Rc<TensorData<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            data: Rc::clone(&self.data),
        }
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(values: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        assert_eq!(
            values.len(),
            numel(&shape),
            "tensor values length {} does not match shape {}",
            values.len(),
            shape_string(&shape)
        );
        Tensor {
            data: Rc::new(TensorData {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values,
                requires_grad,
                grad: RefCell::new(None),
            }),
        }
    }

    /// A tensor outside the differentiable graph.
    pub fn constant(values: Vec<T>, shape: Vec<usize>) -> Self {
        Tensor::new(values, shape, false)
    }

    /// A differentiable leaf (parameter or checked input).
    pub fn param(values: Vec<T>, shape: Vec<usize>) -> Self {
        Tensor::new(values, shape, true)
    }

    pub fn scalar_value(v: T) -> Self {
        Tensor::constant(vec![v], vec![])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor::constant(vec![T::zero(); n], shape)
    }

    pub fn full(shape: Vec<usize>, v: T) -> Self {
        let n = numel(&shape);
        Tensor::constant(vec![v; n], shape)
    }

    pub fn id(&self) -> TensorId {
        self.data.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.data.shape
    }

    pub fn numel(&self) -> usize {
        self.data.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.data.values
    }

    pub fn requires_grad(&self) -> bool {
        self.data.requires_grad
    }

    /// A copy of this tensor's values detached from the graph.
    pub fn detached(&self) -> Tensor<T> {
        Tensor::constant(self.data.values.clone(), self.data.shape.to_vec())
    }

    /// Extract the single element of a scalar (or one-element) tensor.
    pub fn scalar(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.numel()));
        }
        Ok(self.data.values[0])
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.data.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.data.grad.borrow()
    }

    pub fn set_grad(&self, g: Option<Vec<T>>) {
        if let Some(v) = &g {
            assert_eq!(v.len(), self.numel(), "grad length must match tensor");
        }
        *self.data.grad.borrow_mut() = g;
    }

    pub fn zero_grad(&self) {
        *self.data.grad.borrow_mut() = None;
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        assert_eq!(self.shape().len(), 2, "row() needs a rank-2 tensor");
        let cols = self.shape()[1];
        &self.values()[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values().iter().map(|v| v.to_f64c()).collect()
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor{} id={} requires_grad={}",
            shape_string(self.shape()),
            self.id(),
            self.requires_grad()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_values_agree() {
        let t = Tensor::<f64>::constant(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        assert_eq!(t.numel(), 4);
        assert_eq!(t.row(1), &[3.0, 4.0]);
        assert!(!t.requires_grad());
    }

    #[test]
    #[should_panic]
    fn mismatched_shape_panics() {
        let _ = Tensor::<f32>::constant(vec![1.0, 2.0], vec![3]);
    }

    #[test]
    fn grad_slot() {
        let t = Tensor::<f64>::param(vec![1.0, 2.0], vec![2]);
        assert!(t.grad().is_none());
        t.set_grad(Some(vec![0.5, 0.5]));
        assert_eq!(t.grad().unwrap(), vec![0.5, 0.5]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn ids_unique() {
        let a = Tensor::<f32>::zeros(vec![2]);
        let b = Tensor::<f32>::zeros(vec![2]);
        assert_ne!(a.id(), b.id());
        assert_eq!(a.clone().id(), a.id());
    }
}
