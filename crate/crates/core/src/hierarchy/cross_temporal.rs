use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

use super::{Commutation, CrossSectionalStructure, TemporalStructure};

/// Default cap on the length `n (k* + m)` of the full vector.
pub const DEFAULT_SIZE_CAP: usize = 1_000_000;

/// Kronecker product `left ⊗ right` held as its two factors.
#[derive(Debug, Clone, PartialEq)]
pub struct KronOperator {
    pub left: SparseMatrix,
    pub right: SparseMatrix,
}

impl KronOperator {
    pub fn new(left: SparseMatrix, right: SparseMatrix) -> Self {
        KronOperator { left, right }
    }

    pub fn nrows(&self) -> usize {
        self.left.nrows() * self.right.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.left.ncols() * self.right.ncols()
    }

    /// Matrix-free `(L ⊗ R) x`: `x` is split into `L.ncols` blocks of
    /// length `R.ncols`; output block `i` is `Σ_j L[i,j] R x_j`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let rc = self.right.ncols();
        let rr = self.right.nrows();
        let transformed: Vec<Vec<f64>> = x.chunks(rc.max(1)).map(|b| self.right.mul_vec(b)).collect();
        let mut out = vec![0.0; self.nrows()];
        for i in 0..self.left.nrows() {
            let dst = &mut out[i * rr..(i + 1) * rr];
            for (j, v) in self.left.row(i) {
                for (d, s) in dst.iter_mut().zip(&transformed[j]) {
                    *d += v * s;
                }
            }
        }
        out
    }

    pub fn materialize(&self) -> SparseMatrix {
        self.left.kron(&self.right)
    }
}

/// Cross-sectional and temporal structures combined over the canonical
/// vectorization `x = vec(Xᵀ)` of the `n × (k* + m)` matrix `X`: entry
/// `(i, t)` lives at `i (k* + m) + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTemporalStructure {
    cs: CrossSectionalStructure,
    te: TemporalStructure,
}

impl CrossTemporalStructure {
    pub fn new(cs: CrossSectionalStructure, te: TemporalStructure) -> Result<Self> {
        Self::with_cap(cs, te, DEFAULT_SIZE_CAP)
    }

    pub fn with_cap(cs: CrossSectionalStructure, te: TemporalStructure, cap: usize) -> Result<Self> {
        let size = cs
            .n()
            .checked_mul(te.len())
            .ok_or(Error::SizeCap { size: usize::MAX, cap })?;
        if size > cap {
            return Err(Error::SizeCap { size, cap });
        }
        Ok(CrossTemporalStructure { cs, te })
    }

    pub fn cs(&self) -> &CrossSectionalStructure {
        &self.cs
    }

    pub fn te(&self) -> &TemporalStructure {
        &self.te
    }

    pub fn n(&self) -> usize {
        self.cs.n()
    }

    /// `k* + m`.
    pub fn q(&self) -> usize {
        self.te.len()
    }

    /// Length of the full vector, `n (k* + m)`.
    pub fn dim(&self) -> usize {
        self.n() * self.q()
    }

    pub fn index(&self, series: usize, position: usize) -> usize {
        series * self.q() + position
    }

    /// `K_cs = S_cs ⊗ I`.
    pub fn k_cs(&self) -> KronOperator {
        KronOperator::new(self.cs.summing_matrix(), SparseMatrix::identity(self.q()))
    }

    /// `K_te = I ⊗ S_te`.
    pub fn k_te(&self) -> KronOperator {
        KronOperator::new(SparseMatrix::identity(self.n()), self.te.summing_matrix())
    }

    /// `K_ct = S_cs ⊗ S_te`.
    pub fn k_ct(&self) -> KronOperator {
        KronOperator::new(self.cs.summing_matrix(), self.te.summing_matrix())
    }

    /// `H_cs = C_cs ⊗ I`.
    pub fn h_cs(&self) -> KronOperator {
        KronOperator::new(self.cs.constraint_matrix(), SparseMatrix::identity(self.q()))
    }

    /// `H_te = I ⊗ C_te`.
    pub fn h_te(&self) -> KronOperator {
        KronOperator::new(SparseMatrix::identity(self.n()), self.te.constraint_matrix())
    }

    /// Full cross-temporal constraint matrix: the cross-sectional
    /// constraints on the `m` highest-frequency positions stacked over
    /// `I_n ⊗ C_te`; `n_u m + n k*` rows.
    pub fn h_ct(&self) -> SparseMatrix {
        let n_u = self.cs.n_upper();
        let ks = self.te.k_star();
        let m = self.te.m();
        let c_cs = self.cs.constraint_matrix();
        let mut t = Vec::new();
        for h in 0..m {
            for u in 0..n_u {
                for (j, v) in c_cs.row(u) {
                    t.push((h * n_u + u, self.index(j, ks + h), v));
                }
            }
        }
        let top = SparseMatrix::from_triplets(n_u * m, self.dim(), t);
        let bottom = self.h_te().materialize();
        SparseMatrix::vstack(&[&top, &bottom])
    }

    /// Dimension of the coherent subspace, `n_b m`.
    pub fn coherent_dim(&self) -> usize {
        self.cs.n_bottom() * self.te.m()
    }

    pub fn commutation(&self) -> Commutation {
        Commutation::new(self.n(), self.q())
    }

    /// Materializes `K_ct` and `H_ct` and checks `H_ct K_ct = 0`.
    pub fn verify_constraints(&self) -> Result<()> {
        let prod = self.h_ct().matmul(&self.k_ct().materialize());
        let tol = if self.cs.is_integer() { 0.0 } else { 1e-12 * self.cs.agg().amax().max(1.0) };
        if prod.max_abs() > tol {
            return Err(Error::InvalidStructure(format!(
                "H_ct K_ct has entry of size {:e}",
                prod.max_abs()
            )));
        }
        Ok(())
    }

    /// `(‖C_cs X‖_max, ‖X C_teᵀ‖_max)` for a vector in canonical layout.
    pub fn coherence_residuals(&self, x: &[f64]) -> (f64, f64) {
        assert_eq!(x.len(), self.dim());
        let q = self.q();
        let ks = self.te.k_star();
        let n_u = self.cs.n_upper();
        let agg = self.cs.agg();
        let mut cs_res = 0.0f64;
        for t in 0..q {
            for u in 0..n_u {
                let mut r = x[self.index(u, t)];
                for (b, a) in agg.row(u).iter().enumerate() {
                    r -= a * x[self.index(n_u + b, t)];
                }
                cs_res = cs_res.max(r.abs());
            }
        }
        let a_te = self.te.agg_dense();
        let mut te_res = 0.0f64;
        for i in 0..self.n() {
            let row = &x[i * q..(i + 1) * q];
            for r in 0..ks {
                let mut v = row[r];
                for (h, a) in a_te.row(r).iter().enumerate() {
                    v -= a * row[ks + h];
                }
                te_res = te_res.max(v.abs());
            }
        }
        (cs_res, te_res)
    }

    /// Rebuilds the full vector from the highest-frequency bottom block
    /// `B^[1]` (`n_b × m`, row-major): `X = S_cs B^[1] S_teᵀ`.
    pub fn bottom_up(&self, bottom_hourly: &[f64]) -> Vec<f64> {
        let n_b = self.cs.n_bottom();
        let n_u = self.cs.n_upper();
        let m = self.te.m();
        let ks = self.te.k_star();
        let q = self.q();
        assert_eq!(bottom_hourly.len(), n_b * m);
        let mut x = vec![0.0; self.dim()];
        let agg = self.cs.agg();
        for b in 0..n_b {
            x[(n_u + b) * q + ks..(n_u + b + 1) * q].copy_from_slice(&bottom_hourly[b * m..(b + 1) * m]);
        }
        for u in 0..n_u {
            for h in 0..m {
                let mut s = 0.0;
                for (b, a) in agg.row(u).iter().enumerate() {
                    s += a * bottom_hourly[b * m + h];
                }
                x[u * q + ks + h] = s;
            }
        }
        let a_te = self.te.agg_dense();
        for i in 0..self.n() {
            let row = &mut x[i * q..(i + 1) * q];
            for r in 0..ks {
                let mut s = 0.0;
                for (h, a) in a_te.row(r).iter().enumerate() {
                    s += a * row[ks + h];
                }
                row[r] = s;
            }
        }
        x
    }

    /// Extracts `B^[1]` (row-major `n_b × m`).
    pub fn bottom_hourly(&self, x: &[f64]) -> Vec<f64> {
        let q = self.q();
        let ks = self.te.k_star();
        let n_u = self.cs.n_upper();
        (0..self.cs.n_bottom())
            .flat_map(|b| x[(n_u + b) * q + ks..(n_u + b + 1) * q].iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CrossTemporalStructure {
        CrossTemporalStructure::new(
            CrossSectionalStructure::star(2).unwrap(),
            TemporalStructure::new(&[2, 1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn toy_dimensions() {
        let ct = toy();
        let k = ct.k_ct().materialize();
        assert_eq!((k.nrows(), k.ncols()), (9, 4));
        assert_eq!(ct.h_ct().nrows(), 5);
        ct.verify_constraints().unwrap();
        // K_ct = (S_cs ⊗ I)(I_nb ⊗ S_te)
        let right = SparseMatrix::identity(2).kron(&ct.te().summing_matrix());
        assert_eq!(ct.k_cs().materialize().matmul(&right), k);
    }

    #[test]
    fn matrix_free_apply_matches_materialized() {
        let ct = CrossTemporalStructure::new(
            CrossSectionalStructure::two_level(&[2, 3]).unwrap(),
            TemporalStructure::new(&[4, 2, 1]).unwrap(),
        )
        .unwrap();
        for op in [ct.k_cs(), ct.k_te(), ct.k_ct(), ct.h_cs(), ct.h_te()] {
            let x: Vec<f64> = (0..op.ncols()).map(|i| (i as f64 * 0.37).sin()).collect();
            let a = op.apply(&x);
            let b = op.materialize().mul_vec(&x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pv324_vector_length() {
        let ct = CrossTemporalStructure::new(
            CrossSectionalStructure::pv324(),
            TemporalStructure::all_divisors(24).unwrap(),
        )
        .unwrap();
        assert_eq!(ct.dim(), 19_440);
        assert!(matches!(
            CrossTemporalStructure::with_cap(ct.cs().clone(), ct.te().clone(), 10_000),
            Err(Error::SizeCap { size: 19_440, .. })
        ));
    }

    #[test]
    fn bottom_up_is_coherent() {
        let ct = toy();
        let x = ct.bottom_up(&[1.0, 2.0, 3.0, 4.0]);
        // total, k=2 then hourly; bottoms follow
        assert_eq!(x, vec![10.0, 4.0, 6.0, 3.0, 1.0, 2.0, 7.0, 3.0, 4.0]);
        assert_eq!(ct.coherence_residuals(&x), (0.0, 0.0));
        assert_eq!(ct.bottom_hourly(&x), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(ct.h_ct().mul_vec(&x).iter().all(|v| *v == 0.0));
    }
}
