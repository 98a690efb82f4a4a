//! Dense-tensor numerical engine: the layer kernels the gait CNN needs,
//! their backward passes, and the Nadam optimizer.
//!
//! Images travel as `N×H×W×C` tensors in row-major order. Kernels are
//! generic over [`Real`] so the production `f32` path can be checked against
//! an `f64` instantiation of the very same code.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod layer;
mod nadam;

pub use activation::{
    cross_entropy_loss, dropout_backward, dropout_forward, relu_backward, relu_forward, softmax,
    softmax_cross_entropy_grad, DropoutMask, PROB_FLOOR,
};
pub use batchnorm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d_backward, conv2d_forward, same_padding, Conv2d, ConvGrads};
pub use dense::{dense_backward, dense_forward, Dense, DenseGrads};
pub use layer::{LayerKind, LayerSpec};
pub use nadam::{NadamConfig, NadamState};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point element type of the engine.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Whether a forward pass is part of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout masks drawn from the seed.
    Train { seed: u64 },
    Infer,
}

/// N-dimensional float array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient slot, allocated (zeroed) on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for tensor of length {}",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise conversion to another precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.to_f64().unwrap())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|&v| U::lit(v.to_f64().unwrap())).collect()),
        }
    }

    /// Splits the leading (batch) dimension off a 4-d image tensor.
    pub(crate) fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected N×H×W×C tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [n, d] => Ok((n, d)),
            _ => Err(Error::Shape(format!(
                "expected N×D tensor, got {:?}",
                self.shape
            ))),
        }
    }
}
