//! Minimal dense-matrix reverse-mode autodiff, generic over f32/f64.
//!
//! Every forward op appends a node to a [`Tape`]; [`Tape::backward`] walks the
//! nodes in reverse with fixed accumulation orders, so repeated runs are
//! bit-identical.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{
    analytic_param_grads, compare_with_fd, grad_check, loss_value, GradCheckConfig,
    GradCheckReport, ParamCheck,
};
pub use optim::AdamW;
pub use params::{init, ParamId, ParamSet};
pub use tape::{stable_sigmoid, Tape, Var, LAYER_NORM_EPS};

use crate::error::{Error, Result};

/// Scalar element type for all numerics. Implemented for `f32` and `f64`.
pub trait Elem:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// "f32" or "f64", for config echoes and logs.
    const NAME: &'static str;
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Elem for f32 {
    const NAME: &'static str = "f32";
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Elem for f64 {
    const NAME: &'static str = "f64";
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Row-major dense matrix. Vectors are 1xN or Nx1; scalars 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![E::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: E) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<E>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Convenience for literals in tests and fixtures.
    pub fn from_f64s(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, values.iter().map(|&x| E::from_f64(x)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> E {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: E) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [E] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    /// Scalar value of a 1x1 tensor.
    pub fn scalar(&self) -> E {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }
}
