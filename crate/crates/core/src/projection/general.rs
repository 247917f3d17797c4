use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{Covariance, Framework};
use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;
use crate::linalg::{SparseMatrix, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorKind {
    Structural,
    ZeroConstrained,
}

#[derive(Debug, Clone)]
enum SigmaOp {
    Diagonal(Vec<f64>),
    Dense { matrix: DMatrix<f64>, factor: SpdFactor },
}

impl SigmaOp {
    fn new(sigma: &Covariance) -> Result<Self> {
        Ok(match sigma {
            Covariance::Diagonal(d) => SigmaOp::Diagonal(d.values().to_vec()),
            Covariance::Dense(m) => {
                if m.nrows() != m.ncols() {
                    return Err(Error::dim("covariance", "square", format!("{} x {}", m.nrows(), m.ncols())));
                }
                let asym = (m - m.transpose()).amax();
                if asym > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidCovariance(format!("not symmetric (asymmetry {asym:e})")));
                }
                let factor = SpdFactor::new(m.clone(), "covariance")?;
                if !factor.is_cholesky() {
                    return Err(Error::NotPositiveDefinite {
                        context: "covariance".into(),
                        min_eigenvalue: 0.0,
                    });
                }
                SigmaOp::Dense {
                    matrix: m.clone(),
                    factor,
                }
            }
        })
    }

    fn dim(&self) -> usize {
        match self {
            SigmaOp::Diagonal(d) => d.len(),
            SigmaOp::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SigmaOp::Diagonal(d) => x.iter().zip(d).map(|(a, b)| a * b).collect(),
            SigmaOp::Dense { matrix, .. } => (matrix * DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    fn solve(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SigmaOp::Diagonal(d) => x.iter().zip(d).map(|(a, b)| a / b).collect(),
            SigmaOp::Dense { factor, .. } => factor.solve_slice(x),
        }
    }

    fn mul_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SigmaOp::Diagonal(d) => {
                let mut out = m.clone();
                for (r, s) in d.iter().enumerate() {
                    out.row_mut(r).scale_mut(*s);
                }
                out
            }
            SigmaOp::Dense { matrix, .. } => matrix * m,
        }
    }

    fn solve_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SigmaOp::Diagonal(d) => {
                let mut out = m.clone();
                for (r, s) in d.iter().enumerate() {
                    out.row_mut(r).scale_mut(1.0 / *s);
                }
                out
            }
            SigmaOp::Dense { factor, .. } => factor.solve_mat(m),
        }
    }

    fn bytes(&self) -> usize {
        match self {
            SigmaOp::Diagonal(d) => d.len() * 8,
            SigmaOp::Dense { matrix, .. } => matrix.len() * 16,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Structural { k: SparseMatrix, gram: SpdFactor },
    Zero { h: SparseMatrix, gram: SpdFactor },
}

/// Oblique projection onto a coherent subspace, applied matrix-free.
///
/// The structural form computes `K (Kᵀ Σ⁻¹ K)⁻¹ Kᵀ Σ⁻¹ x`, the
/// zero-constrained form `x − Σ Hᵀ (H Σ Hᵀ)⁻¹ H x`. Both factor a dense
/// Gram matrix, so this type is meant for general covariances and
/// moderate dimensions.
#[derive(Debug, Clone)]
pub struct Projector {
    kind: ProjectorKind,
    framework: Option<Framework>,
    sigma_ref: String,
    sigma: SigmaOp,
    op: Op,
}

fn check_dim(sigma: &SigmaOp, rows: usize, what: &str) -> Result<()> {
    if sigma.dim() != rows {
        return Err(Error::dim(format!("covariance vs {what}"), rows, sigma.dim()));
    }
    Ok(())
}

/// Structural-form projector for structural matrix `k`.
pub fn structural_projector(k: &SparseMatrix, sigma: &Covariance) -> Result<Projector> {
    let sig = SigmaOp::new(sigma)?;
    check_dim(&sig, k.nrows(), "structural matrix")?;
    let kd = k.to_dense();
    let gram = kd.transpose() * sig.solve_mat(&kd);
    let gram = SpdFactor::new(gram, "structural Gram matrix KᵀΣ⁻¹K")?;
    Ok(Projector {
        kind: ProjectorKind::Structural,
        framework: None,
        sigma_ref: String::new(),
        sigma: sig,
        op: Op::Structural { k: k.clone(), gram },
    })
}

/// Zero-constrained projector for constraint matrix `h` (full row rank).
pub fn zero_projector(h: &SparseMatrix, sigma: &Covariance) -> Result<Projector> {
    let sig = SigmaOp::new(sigma)?;
    check_dim(&sig, h.ncols(), "constraint matrix")?;
    let ht = h.transpose().to_dense();
    let gram = h.to_dense() * sig.mul_mat(&ht);
    let gram = SpdFactor::new(gram, "constraint system HΣHᵀ")?;
    Ok(Projector {
        kind: ProjectorKind::ZeroConstrained,
        framework: None,
        sigma_ref: String::new(),
        sigma: sig,
        op: Op::Zero { h: h.clone(), gram },
    })
}

impl Projector {
    /// Projector for `framework` of `ct` in the requested representation.
    pub fn for_framework(
        ct: &CrossTemporalStructure,
        framework: Framework,
        kind: ProjectorKind,
        sigma: &Covariance,
    ) -> Result<Self> {
        let p = match (kind, framework) {
            (ProjectorKind::Structural, Framework::Cs) => structural_projector(&ct.k_cs().materialize(), sigma),
            (ProjectorKind::Structural, Framework::Te) => structural_projector(&ct.k_te().materialize(), sigma),
            (ProjectorKind::Structural, Framework::Ct) => structural_projector(&ct.k_ct().materialize(), sigma),
            (ProjectorKind::ZeroConstrained, Framework::Cs) => zero_projector(&ct.h_cs().materialize(), sigma),
            (ProjectorKind::ZeroConstrained, Framework::Te) => zero_projector(&ct.h_te().materialize(), sigma),
            (ProjectorKind::ZeroConstrained, Framework::Ct) => zero_projector(&ct.h_ct(), sigma),
        }?;
        Ok(p.with_framework(framework))
    }

    pub fn with_framework(mut self, framework: Framework) -> Self {
        self.framework = Some(framework);
        self
    }

    pub fn with_sigma_ref(mut self, sigma_ref: impl Into<String>) -> Self {
        self.sigma_ref = sigma_ref.into();
        self
    }

    pub fn kind(&self) -> ProjectorKind {
        self.kind
    }

    pub fn framework(&self) -> Option<Framework> {
        self.framework
    }

    pub fn sigma_ref(&self) -> &str {
        &self.sigma_ref
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        match &self.op {
            Op::Structural { k, gram } => {
                let y = self.sigma.solve(x);
                let r = k.transpose_mul_vec(&y);
                let b = gram.solve_slice(&r);
                k.mul_vec(&b)
            }
            Op::Zero { h, gram } => {
                let r = h.mul_vec(x);
                let lambda = gram.solve_slice(&r);
                let corr = self.sigma.mul(&h.transpose_mul_vec(&lambda));
                x.iter().zip(&corr).map(|(a, c)| a - c).collect()
            }
        }
    }

    /// Dense projection matrix, column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for c in 0..d {
            e[c] = 1.0;
            out.set_column(c, &DVector::from_vec(self.apply(&e)));
            e[c] = 0.0;
        }
        out
    }

    /// Dumps the dense operator matrix as CSV (no header).
    pub fn write_dense_csv(&self, path: &Path) -> Result<()> {
        let m = self.to_dense();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in 0..m.nrows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn storage_bytes(&self) -> usize {
        let op = match &self.op {
            Op::Structural { k, gram } => k.storage_bytes() + gram.storage_bytes(),
            Op::Zero { h, gram } => h.storage_bytes() + gram.storage_bytes(),
        };
        op + self.sigma.bytes()
    }
}
