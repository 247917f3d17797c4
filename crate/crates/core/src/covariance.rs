//! Error covariance constructions for the cross-sectional, temporal and
//! cross-temporal frameworks.
//!
//! Every named construction is diagonal, so covariances are stored as a
//! diagonal over the full `n (k* + m)` vector in canonical layout. For the
//! cross-sectional framework, column `t` of that `n × (k* + m)` grid is the
//! diagonal of `W` at position `t`; for the temporal framework, row `i` is
//! the diagonal of `Ω_i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Cs,
    Te,
    Ct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovName {
    Ols,
    Str,
    StrCs,
    StrTe,
    Wlsv,
}

impl CovName {
    pub const ALL: [CovName; 5] = [CovName::Ols, CovName::Str, CovName::StrCs, CovName::StrTe, CovName::Wlsv];

    pub fn as_str(self) -> &'static str {
        match self {
            CovName::Ols => "ols",
            CovName::Str => "str",
            CovName::StrCs => "str-cs",
            CovName::StrTe => "str-te",
            CovName::Wlsv => "wlsv",
        }
    }

    pub fn needs_residuals(self) -> bool {
        self == CovName::Wlsv
    }
}

impl fmt::Display for CovName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ols" => CovName::Ols,
            "str" => CovName::Str,
            "str-cs" => CovName::StrCs,
            "str-te" => CovName::StrTe,
            "wlsv" => CovName::Wlsv,
            other => return Err(Error::Invalid(format!("unknown covariance {other:?}"))),
        })
    }
}

/// Diagonal covariance over the full vector, viewed as an `n × q` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagCov {
    n: usize,
    q: usize,
    values: Vec<f64>,
}

impl DiagCov {
    pub fn new(n: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * q {
            return Err(Error::dim("diagonal covariance", n * q, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidCovariance(format!(
                "diagonal entry {v} is not strictly positive"
            )));
        }
        Ok(DiagCov { n, q, values })
    }

    pub fn identity(n: usize, q: usize) -> Self {
        DiagCov {
            n,
            q,
            values: vec![1.0; n * q],
        }
    }

    /// `diag(w) ⊗ diag(ω)`.
    pub fn kron(w: &[f64], omega: &[f64]) -> Result<Self> {
        let values = w.iter().flat_map(|a| omega.iter().map(move |b| a * b)).collect();
        Self::new(w.len(), omega.len(), values)
    }

    /// Cross-sectional covariance from one `W^[k]` diagonal per order
    /// (in `orders()` sequence), assembled in the position-major layout
    /// `diag(W^[m], …, W^[1])` and permuted into canonical layout.
    pub fn from_per_order(ct: &CrossTemporalStructure, per_order: &[Vec<f64>]) -> Result<Self> {
        let te = ct.te();
        if per_order.len() != te.p() {
            return Err(Error::dim("per-order covariances", te.p(), per_order.len()));
        }
        let n = ct.n();
        let mut position_major = Vec::with_capacity(ct.dim());
        for t in 0..ct.q() {
            let w = &per_order[te.order_index_of(t)];
            if w.len() != n {
                return Err(Error::dim("W^[k] diagonal", n, w.len()));
            }
            position_major.extend_from_slice(w);
        }
        Self::new(n, ct.q(), ct.commutation().apply(&position_major))
    }

    /// Temporal covariance `diag(Ω_1, …, Ω_n)` from per-series diagonals.
    pub fn from_per_series(ct: &CrossTemporalStructure, per_series: &[Vec<f64>]) -> Result<Self> {
        if per_series.len() != ct.n() {
            return Err(Error::dim("per-series covariances", ct.n(), per_series.len()));
        }
        let mut values = Vec::with_capacity(ct.dim());
        for o in per_series {
            if o.len() != ct.q() {
                return Err(Error::dim("Ω_i diagonal", ct.q(), o.len()));
            }
            values.extend_from_slice(o);
        }
        Self::new(ct.n(), ct.q(), values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, series: usize, position: usize) -> f64 {
        self.values[series * self.q + position]
    }

    /// Diagonal of `W` at temporal position `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, t)).collect()
    }

    /// Diagonal of `Ω_i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    /// `W^[k]` per order, requiring `W` constant across the positions of
    /// each order.
    pub fn per_order(&self, ct: &CrossTemporalStructure) -> Result<Vec<Vec<f64>>> {
        let te = ct.te();
        te.orders()
            .iter()
            .map(|&k| {
                let r = te.positions(k).expect("order of the structure");
                let first = self.column(r.start);
                if r.clone().any(|t| self.column(t) != first) {
                    return Err(Error::InvalidCovariance(format!(
                        "cross-sectional covariance varies within order {k}"
                    )));
                }
                Ok(first)
            })
            .collect()
    }

    /// `(w, ω)` with `values = w ⊗ ω` when the diagonal is separable.
    pub fn separable_factors(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.values.is_empty() {
            return None;
        }
        let omega: Vec<f64> = self.row(0).to_vec();
        let w: Vec<f64> = (0..self.n).map(|i| self.get(i, 0) / omega[0]).collect();
        for i in 0..self.n {
            for t in 0..self.q {
                let expect = w[i] * omega[t];
                if (self.get(i, t) - expect).abs() > 1e-12 * expect.abs() {
                    return None;
                }
            }
        }
        Some((w, omega))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.values))
    }
}

/// A covariance in canonical layout: the diagonal fast path or a general
/// dense symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(DiagCov),
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(d) => d.values.len(),
            Covariance::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Diagonal(d) => d.to_dense(),
            Covariance::Dense(m) => m.clone(),
        }
    }

    pub fn as_diagonal(&self) -> Option<&DiagCov> {
        match self {
            Covariance::Diagonal(d) => Some(d),
            Covariance::Dense(_) => None,
        }
    }
}

impl From<DiagCov> for Covariance {
    fn from(d: DiagCov) -> Self {
        Covariance::Diagonal(d)
    }
}

/// In-sample one-step-ahead errors, one `n × (k* + m)` block per origin
/// (row-major, canonical layout).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    n: usize,
    q: usize,
    blocks: Vec<Vec<f64>>,
}

impl ResidualSet {
    pub fn new(n: usize, q: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::Invalid(format!(
                "at least 2 residual origins required, got {}",
                blocks.len()
            )));
        }
        for (o, b) in blocks.iter().enumerate() {
            if b.len() != n * q {
                return Err(Error::dim(format!("residual block {o}"), n * q, b.len()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("residual block {o}")));
            }
        }
        Ok(ResidualSet { n, q, blocks })
    }

    /// Splits one stacked `(N n) × q` matrix (origins stacked vertically).
    pub fn from_stacked(n: usize, q: usize, stacked: &[f64]) -> Result<Self> {
        if n == 0 || q == 0 || !stacked.len().is_multiple_of(n * q) {
            return Err(Error::dim("stacked residuals", format!("multiple of {}", n * q), stacked.len()));
        }
        Self::new(n, q, stacked.chunks(n * q).map(<[f64]>::to_vec).collect())
    }

    pub fn origins(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsvOptions {
    /// Variance floor relative to the largest estimated variance.
    pub floor_rel: f64,
    /// Subtract the cell mean before squaring (off: zero-mean convention).
    pub center: bool,
}

impl Default for WlsvOptions {
    fn default() -> Self {
        WlsvOptions {
            floor_rel: 1e-12,
            center: false,
        }
    }
}

/// A constructed covariance plus any `(series, order)` cells whose
/// variance was raised to the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltCovariance {
    pub cov: DiagCov,
    pub floored: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct CovarianceSpec<'a> {
    pub name: CovName,
    pub framework: Framework,
    pub residuals: Option<&'a ResidualSet>,
    pub wlsv: WlsvOptions,
}

impl<'a> CovarianceSpec<'a> {
    pub fn new(name: CovName, framework: Framework) -> Self {
        CovarianceSpec {
            name,
            framework,
            residuals: None,
            wlsv: WlsvOptions::default(),
        }
    }

    pub fn with_residuals(mut self, residuals: &'a ResidualSet) -> Self {
        self.residuals = Some(residuals);
        self
    }

    pub fn build(&self, ct: &CrossTemporalStructure) -> Result<BuiltCovariance> {
        let plain = |cov| {
            Ok(BuiltCovariance {
                cov,
                floored: Vec::new(),
            })
        };
        match self.name {
            CovName::Ols => plain(sigma_ols(ct, self.framework)),
            CovName::Str => plain(sigma_str(ct, self.framework)),
            CovName::StrCs => plain(sigma_str_cs(ct)),
            CovName::StrTe => plain(sigma_str_te(ct)),
            CovName::Wlsv => {
                let res = self.residuals.ok_or_else(|| {
                    Error::InvalidCovariance("wlsv requires in-sample residuals".into())
                })?;
                sigma_wlsv(ct, res, self.framework, self.wlsv)
            }
        }
    }
}

pub fn sigma_ols(ct: &CrossTemporalStructure, _framework: Framework) -> DiagCov {
    DiagCov::identity(ct.n(), ct.q())
}

/// Structural scaling: `diag(S_cs 1) ⊗ I` (cs), `I ⊗ diag(S_te 1)` (te),
/// `diag(S_ct 1)` (ct).
pub fn sigma_str(ct: &CrossTemporalStructure, framework: Framework) -> DiagCov {
    let w = ct.cs().row_sums();
    let omega = ct.te().row_sums();
    let (w, omega) = match framework {
        Framework::Cs => (w, vec![1.0; ct.q()]),
        Framework::Te => (vec![1.0; ct.n()], omega),
        Framework::Ct => (w, omega),
    };
    DiagCov::kron(&w, &omega).expect("structural row sums are positive")
}

/// `diag(S_cs 1) ⊗ I` regardless of framework.
pub fn sigma_str_cs(ct: &CrossTemporalStructure) -> DiagCov {
    sigma_str(ct, Framework::Cs)
}

/// `I ⊗ diag(S_te 1)` regardless of framework.
pub fn sigma_str_te(ct: &CrossTemporalStructure) -> DiagCov {
    sigma_str(ct, Framework::Te)
}

/// Per-`(series, order)` residual variances, pooled over the positions of
/// each order and over origins. Returns an `n × p` row-major table.
pub fn pooled_variances(ct: &CrossTemporalStructure, res: &ResidualSet, opts: WlsvOptions) -> Result<Vec<f64>> {
    let (n, q) = res.shape();
    if n != ct.n() || q != ct.q() {
        return Err(Error::dim("residual set", format!("{} x {}", ct.n(), ct.q()), format!("{n} x {q}")));
    }
    let te = ct.te();
    let p = te.p();
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for (ki, &k) in te.orders().iter().enumerate() {
            let r = te.positions(k).unwrap();
            let cells = res.blocks.iter().flat_map(|b| b[i * q + r.start..i * q + r.end].iter().copied());
            let count = (res.origins() * r.len()) as f64;
            let mean = if opts.center { cells.clone().sum::<f64>() / count } else { 0.0 };
            out[i * p + ki] = cells.map(|e| (e - mean) * (e - mean)).sum::<f64>() / count;
        }
    }
    Ok(out)
}

/// Series variance scaling. The same per-`(series, order)` variance is
/// used in all three frameworks, so `Σ_cs`, `Σ_te` and `Σ_ct` coincide.
pub fn sigma_wlsv(
    ct: &CrossTemporalStructure,
    res: &ResidualSet,
    _framework: Framework,
    opts: WlsvOptions,
) -> Result<BuiltCovariance> {
    let mut var = pooled_variances(ct, res, opts)?;
    let p = ct.te().p();
    let max = var.iter().copied().fold(0.0, f64::max);
    let floor = if max > 0.0 { opts.floor_rel * max } else { opts.floor_rel.max(f64::MIN_POSITIVE) };
    let mut floored = Vec::new();
    for (idx, v) in var.iter_mut().enumerate() {
        if *v < floor {
            *v = floor;
            floored.push((idx / p, ct.te().orders()[idx % p]));
        }
    }
    if !floored.is_empty() {
        log::warn!("wlsv: {} (series, order) variances raised to the floor {floor:e}", floored.len());
    }
    let te = ct.te();
    let values = (0..ct.n())
        .flat_map(|i| (0..ct.q()).map(move |t| (i, t)))
        .map(|(i, t)| var[i * p + te.order_index_of(t)])
        .collect();
    Ok(BuiltCovariance {
        cov: DiagCov::new(ct.n(), ct.q(), values)?,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{CrossSectionalStructure, TemporalStructure};

    fn ct(orders: &[usize]) -> CrossTemporalStructure {
        CrossTemporalStructure::new(
            CrossSectionalStructure::star(2).unwrap(),
            TemporalStructure::new(orders).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn structural_diagonals() {
        let c = ct(&[4, 2, 1]);
        let cs = sigma_str(&c, Framework::Cs);
        assert_eq!(cs.column(0), vec![2.0, 1.0, 1.0]);
        let te = sigma_str(&c, Framework::Te);
        assert_eq!(te.row(0), &[4.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        let full = sigma_str(&c, Framework::Ct);
        for i in 0..3 {
            for t in 0..7 {
                assert_eq!(full.get(i, t), cs.get(i, t) * te.get(i, t));
            }
        }
        assert!(full.separable_factors().is_some());
        assert_eq!(sigma_ols(&c, Framework::Ct), DiagCov::identity(3, 7));
    }

    #[test]
    fn wlsv_hand_cell() {
        let c = ct(&[2, 1]);
        let mut b1 = vec![0.0; 9];
        let mut b2 = vec![0.0; 9];
        b1[0] = 1.0;
        b2[0] = -1.0;
        for b in [&mut b1, &mut b2] {
            for v in b.iter_mut().skip(1) {
                if *v == 0.0 {
                    *v = 2.0;
                }
            }
        }
        let res = ResidualSet::new(3, 3, vec![b1, b2]).unwrap();
        let built = sigma_wlsv(&c, &res, Framework::Ct, WlsvOptions::default()).unwrap();
        assert_eq!(built.cov.get(0, 0), 1.0);
        assert_eq!(built.cov.get(0, 1), 4.0);
        assert!(built.floored.is_empty());
    }

    #[test]
    fn wlsv_floor_flags_constant_zero_series() {
        let c = ct(&[2, 1]);
        let mut b = vec![1.0; 9];
        b[6..9].fill(0.0);
        let res = ResidualSet::new(3, 3, vec![b.clone(), b]).unwrap();
        let built = sigma_wlsv(&c, &res, Framework::Ct, WlsvOptions::default()).unwrap();
        assert_eq!(built.floored, vec![(2, 2), (2, 1)]);
        assert_eq!(built.cov.get(2, 0), 1e-12);
    }

    #[test]
    fn per_order_round_trip() {
        let c = ct(&[2, 1]);
        let w = vec![vec![3.0, 1.0, 2.0], vec![5.0, 4.0, 6.0]];
        let d = DiagCov::from_per_order(&c, &w).unwrap();
        assert_eq!(d.column(0), w[0]);
        assert_eq!(d.column(2), w[1]);
        assert_eq!(d.per_order(&c).unwrap(), w);
        let bad = DiagCov::new(3, 3, vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(bad.per_order(&c).is_err());
    }

    #[test]
    fn rejects_invalid() {
        assert!(DiagCov::new(1, 2, vec![1.0, 0.0]).is_err());
        assert!(ResidualSet::new(1, 1, vec![vec![1.0]]).is_err());
        assert!(ResidualSet::new(1, 1, vec![vec![1.0], vec![f64::NAN]]).is_err());
        assert_eq!(ResidualSet::from_stacked(1, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap().origins(), 2);
        assert!(CovarianceSpec::new(CovName::Wlsv, Framework::Ct).build(&ct(&[2, 1])).is_err());
        assert_eq!("str_cs".parse::<CovName>().unwrap(), CovName::StrCs);
    }
}
