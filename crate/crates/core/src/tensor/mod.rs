//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable row-major array plus a record of the op that
//! produced it. [`backward`] walks that record from a scalar loss and returns
//! a [`GradStore`] with the gradient of every `requires_grad` leaf. Immutable
//! values behind `Arc` make a trained model safe to share across inference
//! threads; graph construction itself is single-threaded per training step.

mod backward;
mod kernels;
mod op;
mod ops;

pub use backward::{backward, GradStore};
pub use kernels::conv_out_dim;
pub(crate) use op::Op;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identity of a tensor node inside one process; keys for gradient lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

fn next_id() -> TensorId {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    TensorId(COUNTER.fetch_add(1, Ordering::Relaxed))
}

pub(crate) struct TensorInner<T: Scalar> {
    id: TensorId,
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Dense multidimensional array node. Cloning is cheap (shared storage).
pub struct Tensor<T: Scalar> {
    inner: Arc<TensorInner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={:?}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<T: Scalar> Tensor<T> {
    pub(crate) fn from_op(shape: Vec<usize>, values: Vec<T>, op: Op<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Tensor {
            inner: Arc::new(TensorInner {
                id: next_id(),
                shape,
                values,
                requires_grad,
                op,
            }),
        }
    }

    /// Leaf tensor that does not participate in gradient computation.
    pub fn constant(shape: &[usize], values: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        Ok(Tensor {
            inner: Arc::new(TensorInner {
                id: next_id(),
                shape: shape.to_vec(),
                values,
                requires_grad: false,
                op: Op::Leaf,
            }),
        })
    }

    /// Leaf tensor that accumulates gradients (a learnable parameter).
    pub fn parameter(shape: &[usize], values: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        Ok(Tensor {
            inner: Arc::new(TensorInner {
                id: next_id(),
                shape: shape.to_vec(),
                values,
                requires_grad: true,
                op: Op::Leaf,
            }),
        })
    }

    /// A fresh gradient-accumulating leaf with the same shape and values.
    pub fn requiring_grad(&self) -> Self {
        Self::parameter(&self.inner.shape, self.inner.values.clone())
            .expect("consistent by construction")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::constant(shape, vec![T::zero(); n]).expect("consistent by construction")
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self::constant(shape, vec![value; n]).expect("consistent by construction")
    }

    pub fn scalar(value: T) -> Self {
        Self::constant(&[1], vec![value]).expect("consistent by construction")
    }

    /// Uniform init in `±bound`, drawing elements in row-major order.
    pub fn uniform(shape: &[usize], bound: T, rng: &mut dyn rand::RngCore) -> Self {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| rng.gen_range(-bound.to_f64()..=bound.to_f64()))
            .map(T::from_f64)
            .collect();
        Self::constant(shape, values).expect("consistent by construction")
    }

    pub fn id(&self) -> TensorId {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.inner.values
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn op(&self) -> &Op<T> {
        &self.inner.op
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.inner.values[0]
    }

    /// Same values viewed as a fresh leaf: gradients stop here.
    pub fn detach(&self) -> Self {
        Self::constant(&self.inner.shape, self.inner.values.clone())
            .expect("consistent by construction")
    }

    /// Size of one axis.
    pub fn dim(&self, axis: usize) -> usize {
        self.inner.shape[axis]
    }

    pub(crate) fn check_rank(&self, rank: usize, context: &'static str) -> Result<()> {
        if self.inner.shape.len() != rank {
            return Err(Error::invalid(format!(
                "{context}: expected rank {rank}, got shape {:?}",
                self.inner.shape
            )));
        }
        Ok(())
    }
}
