//! Dense 64-bit float tensors in row-major order.
//!
//! Everything downstream (prototypes, attention heads, losses) is expressed
//! over these. Sizes are desk-scale, so clarity wins over speed.

use super::GradError;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, GradError> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(GradError::InvalidShape(format!(
                "zero-sized dimension in {shape:?}"
            )));
        }
        if data.len() != expected {
            return Err(GradError::InvalidShape(format!(
                "shape {shape:?} wants {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// A 1×n row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor {
            shape: vec![1, n],
            data: values,
        }
    }

    /// An r×c matrix from nested rows; rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GradError> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(GradError::InvalidShape("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
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

    /// True if this is a single-element tensor.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64, GradError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(GradError::NotScalar(self.shape.clone()))
        }
    }

    /// Row count under the 2-D interpretation (scalars count as 1×1).
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
