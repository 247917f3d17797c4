//! Structured projectors for diagonal covariances.
//!
//! Cross-sectional reconciliation with a diagonal `Σ_cs` decouples into one
//! `n`-dimensional projection per temporal position, and temporal
//! reconciliation with a diagonal `Σ_te` into one `(k* + m)`-dimensional
//! projection per series. Both are projections onto `{(u, b) : u = A b}`
//! for the corresponding aggregation matrix `A`, handled by
//! [`AggProjection`]. The full cross-temporal projection is done by
//! [`SchurOct`], which block-eliminates the temporal constraints.

use nalgebra::{DMatrix, DVector};

use crate::covariance::DiagCov;
use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// Solve with `C W Cᵀ` (`n_u × n_u`).
    ZeroConstrained,
    /// Solve with `Sᵀ W⁻¹ S` (`n_b × n_b`).
    Structural,
}

/// Factored oblique projection onto `{(u, b) : u = A b}` in the metric
/// `diag(weights)⁻¹`. Vectors are laid out upper-then-bottom.
#[derive(Debug, Clone)]
pub struct AggProjection {
    form: Form,
    weights: Vec<f64>,
    factor: SpdFactor,
}

impl AggProjection {
    /// `form = None` picks the smaller of the two systems.
    pub fn new(a: &DMatrix<f64>, weights: &[f64], form: Option<Form>) -> Result<Self> {
        let (n_u, n_b) = a.shape();
        if weights.len() != n_u + n_b {
            return Err(Error::dim("projection weights", n_u + n_b, weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidCovariance(format!("weight {w} is not strictly positive")));
        }
        let form = form.unwrap_or(if n_u <= n_b { Form::ZeroConstrained } else { Form::Structural });
        let (wu, wb) = weights.split_at(n_u);
        let factor = match form {
            Form::ZeroConstrained => {
                let mut aw = a.clone();
                for (c, w) in wb.iter().enumerate() {
                    aw.column_mut(c).scale_mut(*w);
                }
                let mut g = aw * a.transpose();
                for (u, w) in wu.iter().enumerate() {
                    g[(u, u)] += w;
                }
                SpdFactor::new(g, "cross-sectional/temporal system C W Cᵀ")?
            }
            Form::Structural => {
                let mut aw = a.transpose();
                for (c, w) in wu.iter().enumerate() {
                    aw.column_mut(c).scale_mut(1.0 / *w);
                }
                let mut g = aw * a;
                for (b, w) in wb.iter().enumerate() {
                    g[(b, b)] += 1.0 / w;
                }
                SpdFactor::new(g, "structural Gram matrix Sᵀ W⁻¹ S")?
            }
        };
        Ok(AggProjection {
            form,
            weights: weights.to_vec(),
            factor,
        })
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Projects `x = [u; b]` in place.
    pub fn apply(&self, a: &DMatrix<f64>, x: &mut [f64]) {
        let n_u = a.nrows();
        let (u, b) = x.split_at_mut(n_u);
        let (wu, wb) = self.weights.split_at(n_u);
        let bv = DVector::from_column_slice(b);
        match self.form {
            Form::ZeroConstrained => {
                let mut r = DVector::from_column_slice(u);
                r -= a * &bv;
                let lambda = self.factor.solve_vec(r);
                let back = a.tr_mul(&lambda);
                for (i, v) in u.iter_mut().enumerate() {
                    *v -= wu[i] * lambda[i];
                }
                for (j, v) in b.iter_mut().enumerate() {
                    *v += wb[j] * back[j];
                }
            }
            Form::Structural => {
                let uw = DVector::from_iterator(n_u, u.iter().zip(wu).map(|(x, w)| x / w));
                let mut rhs = a.tr_mul(&uw);
                for (j, v) in b.iter().enumerate() {
                    rhs[j] += v / wb[j];
                }
                let beta = self.factor.solve_vec(rhs);
                let up = a * &beta;
                u.copy_from_slice(up.as_slice());
                b.copy_from_slice(beta.as_slice());
            }
        }
    }

    /// Dense projection matrix.
    pub fn to_dense(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let d = a.nrows() + a.ncols();
        let mut out = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for c in 0..d {
            e.fill(0.0);
            e[c] = 1.0;
            self.apply(a, &mut e);
            out.set_column(c, &DVector::from_column_slice(&e));
        }
        out
    }

    pub fn storage_bytes(&self) -> usize {
        self.factor.storage_bytes() + self.weights.len() * 8
    }
}

/// Groups identical weight vectors so each distinct one is factored once.
fn dedup_factors(
    a: &DMatrix<f64>,
    vectors: impl Iterator<Item = Vec<f64>>,
    form: Option<Form>,
) -> Result<(Vec<AggProjection>, Vec<usize>)> {
    let mut factors: Vec<AggProjection> = Vec::new();
    let mut index = Vec::new();
    for w in vectors {
        match factors.iter().position(|f| f.weights == w) {
            Some(i) => index.push(i),
            None => {
                index.push(factors.len());
                factors.push(AggProjection::new(a, &w, form)?);
            }
        }
    }
    Ok((factors, index))
}

/// Cross-sectional reconciliation with a diagonal `Σ_cs`: one projection
/// per temporal position (column of `X`).
#[derive(Debug, Clone)]
pub struct CsProjector {
    agg: DMatrix<f64>,
    n: usize,
    q: usize,
    factors: Vec<AggProjection>,
    by_column: Vec<usize>,
}

impl CsProjector {
    pub fn new(ct: &CrossTemporalStructure, sigma: &DiagCov) -> Result<Self> {
        Self::with_form(ct, sigma, None)
    }

    pub fn with_form(ct: &CrossTemporalStructure, sigma: &DiagCov, form: Option<Form>) -> Result<Self> {
        check_shape(ct, sigma)?;
        let agg = ct.cs().agg().clone();
        let (factors, by_column) = dedup_factors(&agg, (0..ct.q()).map(|t| sigma.column(t)), form)?;
        Ok(CsProjector {
            agg,
            n: ct.n(),
            q: ct.q(),
            factors,
            by_column,
        })
    }

    pub fn distinct_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n * self.q);
        let mut col = vec![0.0; self.n];
        for t in 0..self.q {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x[i * self.q + t];
            }
            self.factors[self.by_column[t]].apply(&self.agg, &mut col);
            for (i, c) in col.iter().enumerate() {
                x[i * self.q + t] = *c;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        y
    }

    /// The `n × n` projection used at position `t`.
    pub fn column_matrix(&self, t: usize) -> DMatrix<f64> {
        self.factors[self.by_column[t]].to_dense(&self.agg)
    }

    pub fn storage_bytes(&self) -> usize {
        self.factors.iter().map(AggProjection::storage_bytes).sum::<usize>() + self.agg.len() * 8
    }
}

/// Temporal reconciliation with a diagonal `Σ_te`: one projection per
/// series (row of `X`).
#[derive(Debug, Clone)]
pub struct TeProjector {
    agg: DMatrix<f64>,
    q: usize,
    factors: Vec<AggProjection>,
    by_series: Vec<usize>,
}

impl TeProjector {
    pub fn new(ct: &CrossTemporalStructure, sigma: &DiagCov) -> Result<Self> {
        Self::with_form(ct, sigma, None)
    }

    pub fn with_form(ct: &CrossTemporalStructure, sigma: &DiagCov, form: Option<Form>) -> Result<Self> {
        check_shape(ct, sigma)?;
        let agg = ct.te().agg_dense();
        let (factors, by_series) = dedup_factors(&agg, (0..ct.n()).map(|i| sigma.row(i).to_vec()), form)?;
        Ok(TeProjector {
            agg,
            q: ct.q(),
            factors,
            by_series,
        })
    }

    pub fn distinct_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.by_series.len() * self.q);
        for (row, &f) in x.chunks_mut(self.q).zip(&self.by_series) {
            self.factors[f].apply(&self.agg, row);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        y
    }

    /// The `(k* + m) × (k* + m)` projection used for series `i`.
    pub fn series_matrix(&self, i: usize) -> DMatrix<f64> {
        self.factors[self.by_series[i]].to_dense(&self.agg)
    }

    pub fn storage_bytes(&self) -> usize {
        self.factors.iter().map(AggProjection::storage_bytes).sum::<usize>() + self.agg.len() * 8
    }
}

fn check_shape(ct: &CrossTemporalStructure, sigma: &DiagCov) -> Result<()> {
    if sigma.n() != ct.n() || sigma.q() != ct.q() {
        return Err(Error::dim(
            "covariance grid",
            format!("{} x {}", ct.n(), ct.q()),
            format!("{} x {}", sigma.n(), sigma.q()),
        ));
    }
    Ok(())
}

/// Cross-temporal projection with a diagonal `Σ_ct` via the
/// zero-constrained form.
///
/// The constraint system `H Σ Hᵀ` splits into the cross-sectional rows on
/// the `m` highest-frequency positions (`n_u m`) and the per-series temporal
/// rows (`n k*`). The temporal block is block diagonal, one `k* × k*` block
/// per series, and is eliminated; what remains is a dense `n_u m × n_u m`
/// Schur complement.
#[derive(Debug, Clone)]
pub struct SchurOct {
    n: usize,
    n_u: usize,
    q: usize,
    k_star: usize,
    m: usize,
    a_te: DMatrix<f64>,
    d: Vec<f64>,
    /// Nonzero `(upper, C_cs[upper, j])` per series `j`.
    c_cols: Vec<Vec<(usize, f64)>>,
    te_blocks: Vec<SpdFactor>,
    schur: SpdFactor,
}

impl SchurOct {
    pub fn new(ct: &CrossTemporalStructure, sigma: &DiagCov) -> Result<Self> {
        check_shape(ct, sigma)?;
        let n = ct.n();
        let n_u = ct.cs().n_upper();
        let q = ct.q();
        let ks = ct.te().k_star();
        let m = ct.te().m();
        let a_te = ct.te().agg_dense();
        let d = sigma.values().to_vec();
        let agg = ct.cs().agg();

        let mut c_cols: Vec<Vec<(usize, f64)>> = (0..n_u).map(|u| vec![(u, 1.0)]).collect();
        for b in 0..ct.cs().n_bottom() {
            c_cols.push(
                (0..n_u)
                    .filter(|u| agg[(*u, b)] != 0.0)
                    .map(|u| (u, -agg[(u, b)]))
                    .collect(),
            );
        }

        let nm = n_u * m;
        let mut s = DMatrix::<f64>::zeros(nm, nm);
        for (j, cols) in c_cols.iter().enumerate() {
            for h in 0..m {
                let dj = d[j * q + ks + h];
                for &(u, cu) in cols {
                    for &(v, cv) in cols {
                        s[(h * n_u + u, h * n_u + v)] += cu * cv * dj;
                    }
                }
            }
        }

        let mut te_blocks = Vec::with_capacity(n);
        for i in 0..n {
            let di = &d[i * q..(i + 1) * q];
            let mut aw = a_te.clone();
            for h in 0..m {
                aw.column_mut(h).scale_mut(di[ks + h]);
            }
            let mut g = &aw * a_te.transpose();
            for r in 0..ks {
                g[(r, r)] += di[r];
            }
            let f = SpdFactor::new(g, "temporal constraint block")?;
            if nm > 0 && !c_cols[i].is_empty() && ks > 0 {
                // T_i = V_iᵀ G_i⁻¹ V_i with V_i = -A_te diag(d_i hourly) = -aw
                let gv = f.solve_mat(&aw);
                let t = aw.transpose() * gv;
                for &(u, cu) in &c_cols[i] {
                    for &(v, cv) in &c_cols[i] {
                        let c = cu * cv;
                        for h in 0..m {
                            for h2 in 0..m {
                                s[(h * n_u + u, h2 * n_u + v)] -= c * t[(h, h2)];
                            }
                        }
                    }
                }
            }
            te_blocks.push(f);
        }
        let schur = SpdFactor::new(s, "cross-temporal Schur complement")?;
        Ok(SchurOct {
            n,
            n_u,
            q,
            k_star: ks,
            m,
            a_te,
            d,
            c_cols,
            te_blocks,
            schur,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (n, n_u, q, ks, m) = (self.n, self.n_u, self.q, self.k_star, self.m);
        assert_eq!(x.len(), n * q);

        // h2_i = x_agg - A_te x_hourly, z_i = G_i⁻¹ h2_i
        let mut h2 = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * q..(i + 1) * q];
            let hourly = DVector::from_column_slice(&row[ks..]);
            let r = DVector::from_column_slice(&row[..ks]) - &self.a_te * hourly;
            z.push(self.te_blocks[i].solve_vec(r.clone()));
            h2.push(r);
        }

        // rhs1 = h1 - A12 A22⁻¹ h2
        let mut rhs1 = DVector::zeros(n_u * m);
        for (j, cols) in self.c_cols.iter().enumerate() {
            if cols.is_empty() {
                continue;
            }
            let dj = &self.d[j * q + ks..(j + 1) * q];
            // V_jᵀ z_j = -diag(d_j) A_teᵀ z_j
            let vz = if ks > 0 { self.a_te.tr_mul(&z[j]) } else { DVector::zeros(m) };
            for h in 0..m {
                let xv = x[j * q + ks + h];
                let corr = -dj[h] * vz[h];
                for &(u, cu) in cols {
                    rhs1[h * n_u + u] += cu * (xv - corr);
                }
            }
        }
        let lambda1 = self.schur.solve_vec(rhs1);

        let mut out = x.to_vec();
        for i in 0..n {
            let di = &self.d[i * q..(i + 1) * q];
            // g_i[h] = Σ_u C_cs[u,i] λ1[(h,u)]
            let mut g = DVector::<f64>::zeros(m);
            for h in 0..m {
                for &(u, cu) in &self.c_cols[i] {
                    g[h] += cu * lambda1[h * n_u + u];
                }
            }
            // λ2_i = G_i⁻¹ (h2_i - V_i g_i), V_i g_i = -A_te (d_i ∘ g_i)
            let mut back = DVector::zeros(m);
            if ks > 0 {
                let dg = DVector::from_iterator(m, (0..m).map(|h| di[ks + h] * g[h]));
                let lambda2 = self.te_blocks[i].solve_vec(&h2[i] + &self.a_te * dg);
                for r in 0..ks {
                    out[i * q + r] -= di[r] * lambda2[r];
                }
                back = self.a_te.tr_mul(&lambda2);
            }
            for h in 0..m {
                out[i * q + ks + h] -= di[ks + h] * (g[h] - back[h]);
            }
        }
        out
    }

    pub fn storage_bytes(&self) -> usize {
        self.schur.storage_bytes()
            + self.te_blocks.iter().map(SpdFactor::storage_bytes).sum::<usize>()
            + self.d.len() * 8
            + self.a_te.len() * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{CrossSectionalStructure, TemporalStructure};

    #[test]
    fn both_forms_agree() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let w = [3.0, 2.0, 0.5, 1.5, 1.0];
        let z = AggProjection::new(&a, &w, Some(Form::ZeroConstrained)).unwrap();
        let s = AggProjection::new(&a, &w, Some(Form::Structural)).unwrap();
        let mut x1 = vec![4.0, -1.0, 0.3, 2.0, 1.0];
        let mut x2 = x1.clone();
        z.apply(&a, &mut x1);
        s.apply(&a, &mut x2);
        for (p, r) in x1.iter().zip(&x2) {
            assert!((p - r).abs() < 1e-12, "{x1:?} vs {x2:?}");
        }
        assert!((x1[0] - x1[2] - x1[3] - x1[4]).abs() < 1e-12);
        assert!((x1[1] - x1[2] - x1[3]).abs() < 1e-12);
    }

    #[test]
    fn schur_oct_is_coherent_and_fixes_coherent_points() {
        let ct = CrossTemporalStructure::new(
            CrossSectionalStructure::two_level(&[2, 2]).unwrap(),
            TemporalStructure::new(&[4, 2, 1]).unwrap(),
        )
        .unwrap();
        let vals: Vec<f64> = (0..ct.dim()).map(|i| 1.0 + (i % 5) as f64 * 0.5).collect();
        let sigma = DiagCov::new(ct.n(), ct.q(), vals).unwrap();
        let p = SchurOct::new(&ct, &sigma).unwrap();
        let x: Vec<f64> = (0..ct.dim()).map(|i| ((i * 7) % 11) as f64).collect();
        let y = p.apply(&x);
        let (a, b) = ct.coherence_residuals(&y);
        assert!(a < 1e-10 && b < 1e-10, "{a} {b}");
        let yy = p.apply(&y);
        for (u, v) in y.iter().zip(&yy) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn identical_weights_are_factored_once() {
        let ct = CrossTemporalStructure::new(
            CrossSectionalStructure::star(3).unwrap(),
            TemporalStructure::new(&[6, 3, 2, 1]).unwrap(),
        )
        .unwrap();
        let sigma = DiagCov::identity(ct.n(), ct.q());
        assert_eq!(CsProjector::new(&ct, &sigma).unwrap().distinct_factors(), 1);
        assert_eq!(TeProjector::new(&ct, &sigma).unwrap().distinct_factors(), 1);
    }
}
