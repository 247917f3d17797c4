use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;
use crate::linalg;

/// One forecast origin: the `n × (k* + m)` matrix `X`, stored as its
/// canonical vectorization `vec(Xᵀ)` (row-major `X`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBlock {
    pub origin_id: String,
    n: usize,
    q: usize,
    values: Vec<f64>,
}

impl ForecastBlock {
    pub fn new(origin_id: impl Into<String>, n: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        let origin_id = origin_id.into();
        if values.len() != n * q {
            return Err(Error::dim(format!("forecast block {origin_id}"), n * q, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("forecast block {origin_id}")));
        }
        Ok(ForecastBlock { origin_id, n, q, values })
    }

    pub fn for_structure(origin_id: impl Into<String>, ct: &CrossTemporalStructure, values: Vec<f64>) -> Result<Self> {
        Self::new(origin_id, ct.n(), ct.q(), values)
    }

    pub fn from_matrix(origin_id: impl Into<String>, x: &DMatrix<f64>) -> Result<Self> {
        let values = x.transpose().as_slice().to_vec();
        Self::new(origin_id, x.nrows(), x.ncols(), values)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.q, &self.values)
    }

    /// `vec(Xᵀ)`.
    pub fn vectorize(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn devectorize(origin_id: impl Into<String>, n: usize, q: usize, x: Vec<f64>) -> Result<Self> {
        Self::new(origin_id, n, q, x)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, series: usize, position: usize) -> f64 {
        self.values[series * self.q + position]
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    pub fn check_structure(&self, ct: &CrossTemporalStructure) -> Result<()> {
        if self.n != ct.n() || self.q != ct.q() {
            return Err(Error::dim(
                format!("forecast block {}", self.origin_id),
                format!("{} x {}", ct.n(), ct.q()),
                format!("{} x {}", self.n, self.q),
            ));
        }
        Ok(())
    }

    pub fn frobenius(&self) -> f64 {
        linalg::norm2(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    pub fn frobenius_gap(&self, other: &ForecastBlock) -> f64 {
        linalg::diff_norm2(&self.values, &other.values)
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> ForecastBlock {
        debug_assert_eq!(values.len(), self.values.len());
        ForecastBlock {
            origin_id: self.origin_id.clone(),
            n: self.n,
            q: self.q,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorization_is_row_major() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = ForecastBlock::from_matrix("o", &x).unwrap();
        assert_eq!(b.vectorize(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(b.to_matrix(), x);
        assert_eq!(b.series(1), &[4.0, 5.0, 6.0]);
        assert!(ForecastBlock::new("o", 1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(ForecastBlock::new("o", 1, 2, vec![1.0]).is_err());
    }
}
