//! Dense row-major tensors of `f64`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Shape and dimension errors shared by every layer operation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("rank mismatch: expected rank {expected}, got {actual}")]
    Rank { expected: usize, actual: usize },
    #[error("data length {actual} does not match shape product {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("extent of axis {axis} is zero")]
    ZeroExtent { axis: usize },
    #[error("window {window} larger than input extent {extent}")]
    WindowTooLarge { window: usize, extent: usize },
    #[error("invalid layer parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("missing weights for parameterized layer")]
    MissingWeights,
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Self, ShapeError> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self, ShapeError> {
        let len = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, ShapeError> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(ShapeError::DataLength {
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// One-dimensional tensor over `values`.
    pub fn vector(values: Vec<f64>) -> Result<Self, ShapeError> {
        let n = values.len();
        Self::from_vec(&[n], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same data under a new shape of equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(ShapeError::DataLength {
                expected: len,
                actual: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Interprets the tensor as `[h, w, c]`.
    pub fn hwc(&self) -> Result<(usize, usize, usize), ShapeError> {
        match *self.shape.as_slice() {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(ShapeError::Rank {
                expected: 3,
                actual: self.shape.len(),
            }),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), ShapeError> {
        self.expect_shape(other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    pub(crate) fn expect_shape(&self, shape: &[usize]) -> Result<(), ShapeError> {
        if self.shape.len() != shape.len() {
            return Err(ShapeError::Rank {
                expected: shape.len(),
                actual: self.shape.len(),
            });
        }
        for (i, (&a, &e)) in self.shape.iter().zip(shape).enumerate() {
            if a != e {
                return Err(ShapeError::Dimension {
                    axis: AXIS_NAMES.get(i).copied().unwrap_or("axis"),
                    expected: e,
                    actual: a,
                });
            }
        }
        Ok(())
    }
}

const AXIS_NAMES: [&str; 4] = ["axis 0", "axis 1", "axis 2", "axis 3"];

fn checked_len(shape: &[usize]) -> Result<usize, ShapeError> {
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(ShapeError::ZeroExtent { axis });
    }
    Ok(shape.iter().product())
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}
