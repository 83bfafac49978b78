//! Dense f32 tensors and a tape-based reverse-mode differentiation engine.
//!
//! Tensors are row-major; 4-D tensors use batch, channel, height, width
//! order. Differentiable computation happens on a [`Graph`], which records
//! every op in insertion order and replays it backwards.

mod graph;
pub mod gradcheck;
pub mod kernels;
mod scalar;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

pub use graph::{Activation, Graph, GraphT, Var};
pub use scalar::Scalar;

/// Row-major dense tensor generic over its element type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorT<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type Tensor = TensorT<f32>;

impl<T: Scalar> TensorT<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("Tensor::new", "numel", numel, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Uniform samples in [lo, hi).
    pub fn uniform(shape: impl Into<Vec<usize>>, lo: T, hi: T, rng: &mut RngState) -> Self {
        Self::from_fn(shape, |_| T::of(rng.uniform_range(lo.f64(), hi.f64())))
    }

    pub fn randn(shape: impl Into<Vec<usize>>, rng: &mut RngState) -> Self {
        Self::from_fn(shape, |_| T::of(rng.normal()))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim("reshape", "numel", self.data.len(), n));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Extents of a 4-D tensor, or a dimension error naming `op`.
    pub fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [b, c, h, w] => Ok([b, c, h, w]),
            _ => Err(Error::dim(op, "rank", 4, self.shape.len())),
        }
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v.f64()).sum()
    }

    pub fn dot_f64(&self, other: &TensorT<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.f64() * b.f64())
            .sum()
    }

    pub fn norm_f64(&self) -> f64 {
        self.dot_f64(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &TensorT<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> TensorT<U> {
        TensorT {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Select sample `index` of a batched tensor, keeping a batch axis of 1.
    pub fn batch_item(&self, index: usize) -> TensorT<T> {
        let per = self.data.len() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = 1;
        TensorT {
            shape,
            data: self.data[index * per..(index + 1) * per].to_vec(),
        }
    }

    /// Stack same-shape tensors along a new leading axis.
    pub fn stack(items: &[&[T]], item_shape: &[usize]) -> Result<TensorT<T>> {
        let per: usize = item_shape.iter().product();
        let mut data = Vec::with_capacity(per * items.len());
        for it in items {
            if it.len() != per {
                return Err(Error::dim("stack", "numel", per, it.len()));
            }
            data.extend_from_slice(it);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(item_shape);
        TensorT::new(shape, data)
    }
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).map(|v| v == "1" || v.eq_ignore_ascii_case("true")).unwrap_or(false)
}

/// `HSNC_CHECK_FINITE=1` asserts every op output is finite.
pub fn check_finite_enabled() -> bool {
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| env_flag("HSNC_CHECK_FINITE"))
}

/// `HSNC_DETERMINISTIC=1` pins the kernel thread pool to one thread.
pub fn deterministic_requested() -> bool {
    env_flag("HSNC_DETERMINISTIC")
}

/// Configure the global kernel pool. Must run before the first parallel kernel;
/// later calls are ignored.
pub fn init_threads(deterministic: bool) {
    if deterministic || deterministic_requested() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
}
