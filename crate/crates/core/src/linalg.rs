//! Small linear-algebra layer: a compressed-sparse-row matrix used for the
//! structural and constraint matrices, and a symmetric positive-definite
//! factorization with a pivoted-LU fallback for nearly singular systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the smallest eigenvalue below which a failed
/// Cholesky is treated as indefinite rather than nearly singular.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let trips: Vec<_> = self.triplets().filter(|t| t.2 != 0.0).collect();
        let (nr, nc) = (self.nrows, self.ncols);
        *self = Self::from_triplets(nr, nc, trips);
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Bytes held by the index and value arrays.
    pub fn storage_bytes(&self) -> usize {
        self.row_ptr.len() * 8 + self.col_idx.len() * 8 + self.values.len() * 8
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(cc, _)| *cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(r, c, v)| (c, r, v)).collect(),
        )
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, rhs.nrows);
        let mut t = Vec::new();
        let mut acc = vec![0.0; rhs.ncols];
        let mut touched = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                if acc[c] != 0.0 {
                    t.push((r, c, acc[c]));
                }
                acc[c] = 0.0;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, rhs.ncols, t)
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &SparseMatrix) -> SparseMatrix {
        let mut t = Vec::with_capacity(self.nnz() * rhs.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in rhs.triplets() {
                t.push((r1 * rhs.nrows + r2, c1 * rhs.ncols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * rhs.nrows, self.ncols * rhs.ncols, t)
    }

    /// Stacks `blocks` vertically; all must share the column count.
    pub fn vstack(blocks: &[&SparseMatrix]) -> SparseMatrix {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        let mut t = Vec::new();
        let mut offset = 0;
        for b in blocks {
            assert_eq!(b.ncols, ncols);
            t.extend(b.triplets().map(|(r, c, v)| (r + offset, c, v)));
            offset += b.nrows;
        }
        Self::from_triplets(offset, ncols, t)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
enum FactorKind {
    Empty,
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Factorization of a symmetric positive (semi)definite system matrix.
///
/// Cholesky is tried first. When it fails and the smallest eigenvalue is
/// within [`PIVOT_TOLERANCE`] (relative) of zero, a fully pivoted LU is used
/// instead, provided the matrix is numerically nonsingular.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    kind: FactorKind,
}

impl SpdFactor {
    pub fn new(mat: DMatrix<f64>, context: &str) -> Result<Self> {
        assert_eq!(mat.nrows(), mat.ncols());
        let dim = mat.nrows();
        if dim == 0 {
            return Ok(SpdFactor {
                dim,
                kind: FactorKind::Empty,
            });
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        if let Some(ch) = mat.clone().cholesky() {
            return Ok(SpdFactor {
                dim,
                kind: FactorKind::Cholesky(ch),
            });
        }
        let eig = nalgebra::SymmetricEigen::new(mat.clone());
        let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PIVOT_TOLERANCE * max_abs.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite {
                context: context.to_string(),
                min_eigenvalue: min,
            });
        }
        let rank_tol = max_abs * dim as f64 * f64::EPSILON;
        let deficiency = eig.eigenvalues.iter().filter(|v| v.abs() <= rank_tol).count();
        if deficiency > 0 {
            return Err(Error::Singular {
                context: context.to_string(),
                condition: max_abs / min.abs().max(f64::MIN_POSITIVE),
                deficiency,
            });
        }
        log::debug!("{context}: Cholesky failed, falling back to pivoted LU (min eigenvalue {min:e})");
        Ok(SpdFactor {
            dim,
            kind: FactorKind::Lu(mat.full_piv_lu()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.kind, FactorKind::Cholesky(_))
    }

    pub fn solve_vec(&self, b: DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.dim);
        match &self.kind {
            FactorKind::Empty => b,
            FactorKind::Cholesky(ch) => ch.solve(&b),
            FactorKind::Lu(lu) => lu.solve(&b).expect("LU was checked nonsingular"),
        }
    }

    pub fn solve_slice(&self, b: &[f64]) -> Vec<f64> {
        self.solve_vec(DVector::from_column_slice(b)).as_slice().to_vec()
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim);
        match &self.kind {
            FactorKind::Empty => b.clone(),
            FactorKind::Cholesky(ch) => ch.solve(b),
            FactorKind::Lu(lu) => lu.solve(b).expect("LU was checked nonsingular"),
        }
    }

    /// Approximate bytes held by the factor.
    pub fn storage_bytes(&self) -> usize {
        self.dim * self.dim * 8
    }
}

/// Euclidean (Frobenius for flattened matrices) norm.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_and_matmul_agree_with_dense() {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]));
        let b = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 4.0, 0.0]));
        let k = a.kron(&b).to_dense();
        assert_eq!(k.shape(), (4, 6));
        assert_eq!(k[(0, 3)], 2.0);
        assert_eq!(k[(3, 4)], 12.0);
        assert_eq!(k[(2, 1)], 0.0);
        let p = a.matmul(&b).to_dense();
        assert_eq!(p, a.to_dense() * b.to_dense());
    }

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(1, 2, vec![(0, 1, 1.0), (0, 1, 2.0), (0, 0, 1.0), (0, 0, -1.0)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 3.0);
    }

    #[test]
    fn spd_factor_falls_back_and_rejects() {
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = SpdFactor::new(spd, "t").unwrap();
        assert!(f.is_cholesky());
        let x = f.solve_slice(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            SpdFactor::new(indefinite, "t"),
            Err(Error::NotPositiveDefinite { .. })
        ));

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match SpdFactor::new(singular, "t") {
            Err(Error::Singular { deficiency, .. }) => assert_eq!(deficiency, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(SpdFactor::new(DMatrix::zeros(0, 0), "t").unwrap().dim(), 0);
    }
}
