use crate::linalg::SparseMatrix;

/// Commutation matrix `P` for `nrows × ncols` matrices, stored as an index
/// map: `P vec(X) = vec(Xᵀ)` with column-major `vec`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commutation {
    nrows: usize,
    ncols: usize,
    /// `source[d]` is the entry of `vec(X)` landing at `d` in `vec(Xᵀ)`.
    source: Vec<usize>,
}

impl Commutation {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        let mut source = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                source.push(j * nrows + i);
            }
        }
        Commutation {
            nrows,
            ncols,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.source.len());
        self.source.iter().map(|&s| v[s]).collect()
    }

    /// `Pᵀ v`, the inverse permutation.
    pub fn apply_transpose<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.source.len());
        let mut out = vec![T::default(); v.len()];
        for (d, &s) in self.source.iter().enumerate() {
            out[s] = v[d];
        }
        out
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let n = self.len();
        SparseMatrix::from_triplets(
            n,
            n,
            self.source.iter().enumerate().map(|(d, &s)| (d, s, 1.0)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_three() {
        let p = Commutation::new(2, 3);
        // vec of [[1,2,3],[4,5,6]]
        assert_eq!(p.apply(&[1, 4, 2, 5, 3, 6]), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(p.apply_transpose(&[1, 2, 3, 4, 5, 6]), vec![1, 4, 2, 5, 3, 6]);
    }

    #[test]
    fn identity_and_inverse() {
        assert_eq!(Commutation::new(1, 1).apply(&[7.0]), vec![7.0]);
        let (n, q) = (4, 7);
        let v: Vec<usize> = (0..n * q).collect();
        let back = Commutation::new(q, n).apply(&Commutation::new(n, q).apply(&v));
        assert_eq!(back, v);
        let dense = Commutation::new(n, q).to_sparse().to_dense();
        assert_eq!(dense.transpose() * &dense, nalgebra::DMatrix::identity(n * q, n * q));
    }
}
