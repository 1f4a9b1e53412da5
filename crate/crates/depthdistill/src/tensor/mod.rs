//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Data is contiguous row-major. There are no strided views: ops that
//! rearrange elements (concat, slice, transpose) copy. Gradients are
//! accumulated into per-tensor buffers by [`tape::Tape::backward`].

pub mod gradcheck;
pub mod io;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod tape;

pub use rng::Rng;
pub use scalar::{Dtype, Scalar};
pub use tape::Tape;

use crate::error::{Error, Result};
use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

/// Ordered dimension sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

impl From<&[usize]> for Shape {
    fn from(dims: &[usize]) -> Self {
        Shape(dims.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(dims: [usize; N]) -> Self {
        Shape(dims.to_vec())
    }
}

struct Inner<T> {
    shape: Shape,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: Cell<bool>,
}

/// Refcounted handle to a tensor. Cloning is cheap and shares storage.
pub struct Tensor<T> {
    inner: Rc<Inner<T>>,
}

impl<T> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{}{{requires_grad: {}}}", self.shape(), self.requires_grad())
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Tensor<T>> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(Error::shape(format!(
                "shape {} implies {} elements, data has {}",
                shape,
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
            }),
        })
    }

    pub fn full(shape: impl Into<Shape>, value: T) -> Tensor<T> {
        let shape = shape.into();
        let n = shape.numel();
        Tensor::from_vec(shape, vec![value; n]).expect("consistent by construction")
    }

    pub fn zeros(shape: impl Into<Shape>) -> Tensor<T> {
        Tensor::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Tensor<T> {
        Tensor::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor::full([1], value)
    }

    /// I.i.d. normal(0, std^2) draws from `rng` in element order.
    pub fn randn(shape: impl Into<Shape>, std: f64, rng: &mut Rng) -> Tensor<T> {
        let shape = shape.into();
        let n = shape.numel();
        let data = (0..n).map(|_| T::from_f64(rng.normal() * std)).collect();
        Tensor::from_vec(shape, data).expect("consistent by construction")
    }

    /// Uniform draws in [lo, hi).
    pub fn rand_uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut Rng) -> Tensor<T> {
        let shape = shape.into();
        let n = shape.numel();
        let data = (0..n).map(|_| T::from_f64(rng.range(lo, hi))).collect();
        Tensor::from_vec(shape, data).expect("consistent by construction")
    }

    pub fn shape(&self) -> &Shape {
        &self.inner.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.inner.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.rank()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.numel()
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the raw buffer. Only the optimizer and
    /// explicit copy routines may use this, and never while a tape that
    /// saw this tensor is still alive.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor {}", self.shape());
        self.inner.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.requires_grad.set(flag);
    }

    pub fn requires_grad_(self, flag: bool) -> Tensor<T> {
        self.set_requires_grad(flag);
        self
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Take and clear the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Add `g` into this tensor's gradient buffer (no-op unless the
    /// tensor requires grad). Fan-out contributions accumulate.
    pub fn accum_grad(&self, g: &[T]) {
        if !self.requires_grad() {
            return;
        }
        debug_assert_eq!(g.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, &x) in buf.iter_mut().zip(g) {
                    *b = *b + x;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// New leaf with copied data and no gradient participation.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::from_vec(self.shape().clone(), self.to_vec()).expect("same shape")
    }

    /// Overwrite this tensor's data from another of identical shape.
    pub fn copy_from(&self, src: &Tensor<T>) {
        assert_eq!(self.shape(), src.shape(), "copy_from shape mismatch");
        self.data_mut().copy_from_slice(&src.data());
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|&x| U::from_f64(x.to_f64())).collect();
        Tensor::from_vec(self.shape().clone(), data).expect("same shape")
    }

    pub fn is_finite(&self) -> bool {
        self.data().iter().all(|x| x.is_finite())
    }

    /// Structural pointer identity; two handles to the same storage.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

/// Order-sensitive checksum over the exact bit patterns of the data.
pub fn checksum<T: Scalar>(tensors: &[Tensor<T>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    };
    for t in tensors {
        let mut bytes = Vec::with_capacity(t.numel() * T::DTYPE.size_bytes());
        for &x in t.data().iter() {
            x.write_le(&mut bytes);
        }
        for b in bytes {
            eat(b);
        }
    }
    h
}
