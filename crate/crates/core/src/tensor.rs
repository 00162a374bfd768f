//! Dense 64-bit real tensors in row-major layout.

use crate::error::{CoreError, Result};

/// A dense tensor of `f64` values. Scalars have an empty shape, vectors a
/// single extent and matrices two.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl TensorValue {
    /// Builds a tensor, rejecting shape/data mismatches and non-finite entries.
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::ShapeDataMismatch {
                shape: shape.clone(),
                len: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { value: bad });
        }
        Ok(Self { data, shape })
    }

    /// Like [`TensorValue::new`] but admits NaN/Inf entries. Only for
    /// diagnostic payloads that may legitimately carry sentinel values.
    pub fn new_allow_non_finite(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::ShapeDataMismatch {
                shape: shape.clone(),
                len: data.len(),
            });
        }
        Ok(Self { data, shape })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            data: vec![v],
            shape: vec![],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(data, vec![n])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(data, vec![rows, cols])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            data: vec![0.0; n],
            shape: shape.to_vec(),
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            data: vec![v; n],
            shape: shape.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(CoreError::NotScalar {
                shape: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    /// Element of a rank-2 tensor at (row, col).
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Elementwise map into a fresh tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape.clone(),
        }
    }
}
