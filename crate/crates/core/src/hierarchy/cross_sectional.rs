use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Linear aggregation constraints of an `n`-variate series: `n_u` upper
/// series obtained from `n_b` bottom series through the weights `A`.
///
/// Series are ordered upper-then-bottom everywhere in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionalStructure {
    agg: DMatrix<f64>,
    labels: Vec<String>,
}

impl CrossSectionalStructure {
    /// Validates `agg` (`n_u × n_b`) and attaches labels. Missing labels are
    /// generated as `U1..`, `B1..`.
    ///
    /// A structure without upper series (`n_u = 0`) is accepted as the
    /// degenerate, unconstrained case.
    pub fn new(agg: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (n_u, n_b) = agg.shape();
        if n_b == 0 {
            return Err(Error::InvalidStructure(
                "aggregation matrix has no bottom series".into(),
            ));
        }
        if agg.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("aggregation matrix".into()));
        }
        for r in 0..n_u {
            if agg.row(r).iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidStructure(format!(
                    "aggregation row {} is all zero",
                    r + 1
                )));
            }
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != n_u + n_b {
                    return Err(Error::dim("series labels", n_u + n_b, l.len()));
                }
                let mut seen = std::collections::HashSet::new();
                if let Some(dup) = l.iter().find(|s| !seen.insert(s.as_str())) {
                    return Err(Error::InvalidStructure(format!("duplicate series label {dup:?}")));
                }
                l
            }
            None => (1..=n_u)
                .map(|i| format!("U{i}"))
                .chain((1..=n_b).map(|i| format!("B{i}")))
                .collect(),
        };
        Ok(CrossSectionalStructure { agg, labels })
    }

    /// One total over `n_b` bottoms.
    pub fn star(n_b: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(1, n_b, 1.0), None)
    }

    /// Three-level hierarchy: a grand total over groups of the given sizes.
    pub fn two_level(group_sizes: &[usize]) -> Result<Self> {
        let n_b: usize = group_sizes.iter().sum();
        let n_u = 1 + group_sizes.len();
        let mut agg = DMatrix::zeros(n_u, n_b);
        agg.row_mut(0).fill(1.0);
        let mut start = 0;
        for (g, &size) in group_sizes.iter().enumerate() {
            for b in start..start + size {
                agg[(g + 1, b)] = 1.0;
            }
            start += size;
        }
        Self::new(agg, None)
    }

    /// The 324-series photovoltaic hierarchy: one system total, five zones
    /// of 27, 73, 101, 86 and 31 plants.
    pub fn pv324() -> Self {
        let sizes = [27usize, 73, 101, 86, 31];
        let mut labels = vec!["ISO".to_string()];
        labels.extend((1..=5).map(|z| format!("TZ{z}")));
        labels.extend((1..=318).map(|p| format!("P{p}")));
        let base = Self::two_level(&sizes).expect("static hierarchy is valid");
        Self::new(base.agg, Some(labels)).expect("static hierarchy is valid")
    }

    pub fn n(&self) -> usize {
        self.agg.nrows() + self.agg.ncols()
    }

    pub fn n_upper(&self) -> usize {
        self.agg.nrows()
    }

    pub fn n_bottom(&self) -> usize {
        self.agg.ncols()
    }

    pub fn agg(&self) -> &DMatrix<f64> {
        &self.agg
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_integer(&self) -> bool {
        self.agg.iter().all(|v| v.fract() == 0.0)
    }

    /// `S_cs = [A; I]`, `n × n_b`.
    pub fn summing_matrix(&self) -> SparseMatrix {
        let (n_u, n_b) = self.agg.shape();
        let mut t = Vec::new();
        for r in 0..n_u {
            for c in 0..n_b {
                if self.agg[(r, c)] != 0.0 {
                    t.push((r, c, self.agg[(r, c)]));
                }
            }
        }
        t.extend((0..n_b).map(|b| (n_u + b, b, 1.0)));
        SparseMatrix::from_triplets(n_u + n_b, n_b, t)
    }

    /// `C_cs = [I | -A]`, `n_u × n`.
    pub fn constraint_matrix(&self) -> SparseMatrix {
        SparseMatrix::from_dense(&self.constraint_dense())
    }

    pub fn constraint_dense(&self) -> DMatrix<f64> {
        let (n_u, n_b) = self.agg.shape();
        let mut c = DMatrix::zeros(n_u, n_u + n_b);
        c.view_mut((0, 0), (n_u, n_u)).fill_with_identity();
        c.view_mut((0, n_u), (n_u, n_b)).copy_from(&(-&self.agg));
        c
    }

    /// `S_cs 1`: number (or weighted count) of bottoms under each series.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.agg.row_iter().map(|r| r.sum()).collect();
        out.extend(std::iter::repeat_n(1.0, self.n_bottom()));
        out
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}
