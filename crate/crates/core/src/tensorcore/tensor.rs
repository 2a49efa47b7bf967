use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global floating-point mode for a run.
///
/// `F32` is the training default; `F64` exists for verification. See the
/// module docs for the exact arithmetic contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FloatMode {
    #[default]
    F32,
    F64,
}

impl FloatMode {
    /// Rounds `x` to the mode's representable set.
    #[inline]
    pub fn quantize(self, x: f64) -> f64 {
        match self {
            FloatMode::F32 => x as f32 as f64,
            FloatMode::F64 => x,
        }
    }

    /// Rounds a whole buffer in place.
    pub fn quantize_slice(self, xs: &mut [f64]) {
        if self == FloatMode::F32 {
            for x in xs.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}

/// Dense row-major matrix. Vectors are 1×D, scalars 1×1.
///
/// Storage is shared on clone (copy-on-write): tensors are immutable in
/// tape graphs, so per-sample parameter leaves alias one buffer instead of
/// copying megabytes per forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: std::sync::Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch {
                kernel: "tensor_new",
                detail: format!("extents must be positive, got {rows}x{cols}"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                kernel: "tensor_new",
                detail: format!("data length {} != {rows}x{cols}", data.len()),
            });
        }
        Ok(Tensor { rows, cols, data: std::sync::Arc::new(data) })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: std::sync::Arc::new(vec![0.0; rows * cols]) }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: std::sync::Arc::new(vec![x]) }
    }

    /// 1×D row vector.
    pub fn row(values: Vec<f64>) -> Result<Self> {
        let cols = values.len();
        Tensor::new(1, cols, values)
    }

    /// Stacks equal-length rows into an N×D matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::ShapeMismatch {
                kernel: "from_rows",
                detail: "no rows".into(),
            });
        }
        let d = rows[0].len();
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::ShapeMismatch {
                    kernel: "from_rows",
                    detail: format!("row {i} has length {}, expected {d}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(n, d, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view; copies the buffer first when it is shared.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        std::sync::Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_data(self) -> Vec<f64> {
        std::sync::Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::ShapeMismatch {
                kernel: "scalar_value",
                detail: format!("expected 1x1, got {}x{}", self.rows, self.cols),
            });
        }
        Ok(self.data[0])
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }

    pub fn quantized(mut self, mode: FloatMode) -> Self {
        if mode == FloatMode::F32 {
            mode.quantize_slice(self.data_mut());
        }
        self
    }
}
