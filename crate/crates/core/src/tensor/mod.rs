//! Rank-4 tensors and the hand-differentiated primitives the network is
//! built from.
//!
//! Every primitive is a pure function of its inputs. Forward and backward
//! passes are written out explicitly; there is no autograd graph.

mod conv;
mod elementwise;
mod optim;
mod pool;
mod scalar;

use std::fmt;

pub use conv::{
    conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvGrads, ConvSpec,
    Padding,
};
pub(crate) use conv::{conv2d_backward_impl, transposed_conv2d_backward_impl};
pub use elementwise::{
    hadamard, relu, relu_backward, sigmoid, sigmoid_backward, spread2x2, spread2x2_backward,
    upsample_nearest2x, upsample_nearest2x_backward,
};
pub use optim::{sgd_momentum_step, sgd_momentum_update, SgdHyper};
pub use pool::{
    avgpool_same, avgpool_same_backward, maxpool2x2, maxpool2x2_backward, maxpool2x2_with,
    unpool2x2, unpool2x2_backward, PoolOptions, PoolSwitches,
};
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Dimensions of a tensor in (batch, channels, height, width) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one (h, w) plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Number of elements belonging to one batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub const fn with_spatial(self, h: usize, w: usize) -> Self {
        Shape { h, w, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array stored row-major in N, C, H, W order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "tensor",
                format!("{} values for shape {shape}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor from a generator called with (n, c, y, x).
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: T) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    /// All channels of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.item();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.shape.plane();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Inner product, accumulated in f64.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.expect_shape("dot", other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.to_f64().unwrap_or(f64::NAN) * b.to_f64().unwrap_or(f64::NAN))
            .sum())
    }

    /// Sum of squares, accumulated in f64.
    pub fn squared_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let v = v.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_shape(op, other.shape)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape("add_assign", other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Passes the tensor through unchanged, or reports `op` as the source of
    /// a NaN/Inf.
    pub fn finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn expect_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape == expected {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                format!("expected {expected}, got {}", self.shape),
            ))
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Stacks `a` and `b` along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let (sa, sb) = (a.shape, b.shape);
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            return Err(Error::shape("concat_channels", format!("{sa} vs {sb}")));
        }
        let shape = sa.with_channels(sa.c + sb.c);
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..sa.n {
            data.extend_from_slice(a.item(n));
            data.extend_from_slice(b.item(n));
        }
        Ok(Tensor { shape, data })
    }

    /// Splits along the channel axis into `[0, at)` and `[at, c)`.
    pub fn split_channels(&self, at: usize) -> Result<(Self, Self)> {
        let s = self.shape;
        if at > s.c {
            return Err(Error::shape(
                "split_channels",
                format!("split at {at} of {} channels", s.c),
            ));
        }
        let (sa, sb) = (s.with_channels(at), s.with_channels(s.c - at));
        let mut a = Vec::with_capacity(sa.len());
        let mut b = Vec::with_capacity(sb.len());
        let cut = at * s.plane();
        for n in 0..s.n {
            let item = self.item(n);
            a.extend_from_slice(&item[..cut]);
            b.extend_from_slice(&item[cut..]);
        }
        Ok((Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b }))
    }

    /// Channel `c` of every batch item as an (N, 1, H, W) tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let s = self.shape;
        if c >= s.c {
            return Err(Error::shape(
                "channel",
                format!("channel {c} of {}", s.c),
            ));
        }
        let mut data = Vec::with_capacity(s.n * s.plane());
        for n in 0..s.n {
            data.extend_from_slice(self.plane(n, c));
        }
        Ok(Tensor {
            shape: s.with_channels(1),
            data,
        })
    }
}

/// Runs `f` for every batch item, in parallel when the `parallel` feature is
/// enabled. Results come back in batch order either way.
pub(crate) fn map_items<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
