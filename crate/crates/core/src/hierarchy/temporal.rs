use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Temporal aggregation grid: orders `K` (descending, each dividing `m`).
///
/// Positions within one series run from the coarsest order (`k = m`, one
/// position) down to `k = 1` (`m` positions); `k*` counts the aggregated
/// positions, so a series carries `k* + m` values per cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalStructure {
    orders: Vec<usize>,
    offsets: Vec<usize>,
    m: usize,
    k_star: usize,
    added_unit: bool,
}

impl TemporalStructure {
    pub fn new(orders: &[usize]) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidStructure("no temporal orders given".into()));
        }
        if orders.contains(&0) {
            return Err(Error::InvalidStructure("temporal order 0".into()));
        }
        let mut ks: Vec<usize> = orders.to_vec();
        ks.sort_unstable_by(|a, b| b.cmp(a));
        ks.dedup();
        let added_unit = !ks.contains(&1);
        if added_unit {
            log::warn!("order 1 missing from {orders:?}; added");
            ks.push(1);
        }
        let m = ks[0];
        if let Some(bad) = ks.iter().find(|k| !m.is_multiple_of(**k)) {
            return Err(Error::InvalidStructure(format!(
                "order {bad} does not divide m = {m}"
            )));
        }
        let mut offsets = Vec::with_capacity(ks.len());
        let mut acc = 0;
        for &k in &ks {
            offsets.push(acc);
            acc += m / k;
        }
        Ok(TemporalStructure {
            k_star: acc - m,
            orders: ks,
            offsets,
            m,
            added_unit,
        })
    }

    /// All divisors of `m`, e.g. `{24,12,8,6,4,3,2,1}` for hourly data.
    pub fn all_divisors(m: usize) -> Result<Self> {
        let ks: Vec<usize> = (1..=m).filter(|k| m.is_multiple_of(*k)).collect();
        Self::new(&ks)
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    /// Values per series per cycle, `k* + m`.
    pub fn len(&self) -> usize {
        self.k_star + self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether order 1 had to be added during construction.
    pub fn added_unit(&self) -> bool {
        self.added_unit
    }

    pub fn p(&self) -> usize {
        self.orders.len()
    }

    /// Positions of order `k` within a series block.
    pub fn positions(&self, k: usize) -> Option<Range<usize>> {
        let idx = self.orders.iter().position(|o| *o == k)?;
        let start = self.offsets[idx];
        Some(start..start + self.m / k)
    }

    /// Index into [`orders`](Self::orders) of the order a position belongs to.
    pub fn order_index_of(&self, position: usize) -> usize {
        assert!(position < self.len());
        self.offsets.partition_point(|o| *o <= position) - 1
    }

    pub fn order_of(&self, position: usize) -> usize {
        self.orders[self.order_index_of(position)]
    }

    /// Column labels `k{order}_{index}` in canonical order, 1-based index.
    pub fn position_labels(&self) -> Vec<String> {
        self.orders
            .iter()
            .flat_map(|&k| (1..=self.m / k).map(move |j| format!("k{k}_{j}")))
            .collect()
    }

    /// Aggregation block of `S_te`: `k* × m`.
    pub fn agg_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.k_star, self.m);
        let mut row = 0;
        for &k in self.orders.iter().filter(|k| **k != 1) {
            for j in 0..self.m / k {
                for h in j * k..(j + 1) * k {
                    a[(row, h)] = 1.0;
                }
                row += 1;
            }
        }
        a
    }

    /// `S_te`, `(k* + m) × m`.
    pub fn summing_matrix(&self) -> SparseMatrix {
        let a = SparseMatrix::from_dense(&self.agg_dense());
        SparseMatrix::vstack(&[&a, &SparseMatrix::identity(self.m)])
    }

    /// `C_te = [I | -A_te]`, `k* × (k* + m)`.
    pub fn constraint_matrix(&self) -> SparseMatrix {
        let a = self.agg_dense();
        let ks = self.k_star;
        let mut t: Vec<_> = (0..ks).map(|r| (r, r, 1.0)).collect();
        for r in 0..ks {
            for h in 0..self.m {
                if a[(r, h)] != 0.0 {
                    t.push((r, ks + h, -a[(r, h)]));
                }
            }
        }
        SparseMatrix::from_triplets(ks, ks + self.m, t)
    }

    /// `S_te 1_m`: the order of each position.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|p| self.order_of(p) as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarterly() {
        let te = TemporalStructure::new(&[4, 2, 1]).unwrap();
        assert_eq!((te.m(), te.k_star(), te.len()), (4, 3, 7));
        assert_eq!(te.row_sums(), vec![4.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(te.position_labels()[..3], ["k4_1", "k2_1", "k2_2"]);
    }

    #[test]
    fn hourly_k_star() {
        let te = TemporalStructure::new(&[24, 12, 8, 6, 4, 3, 2, 1]).unwrap();
        // 1 + 2 + 3 + 4 + 6 + 8 + 12
        assert_eq!(te.k_star(), 36);
        assert_eq!(te.len(), 60);
        assert_eq!(te.positions(8), Some(3..6));
        assert_eq!(te.order_of(36), 1);
        assert_eq!(te, TemporalStructure::all_divisors(24).unwrap());
    }

    #[test]
    fn two_leaf() {
        let te = TemporalStructure::new(&[2, 1]).unwrap();
        assert_eq!(
            te.summing_matrix().to_dense(),
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0])
        );
        assert!(te.constraint_matrix().matmul(&te.summing_matrix()).is_zero());
    }

    #[test]
    fn unit_order_added_and_divisibility_checked() {
        let te = TemporalStructure::new(&[6, 3]).unwrap();
        assert!(te.added_unit());
        assert_eq!(te.orders(), &[6, 3, 1]);
        assert!(TemporalStructure::new(&[4, 3, 1]).is_err());
        assert!(TemporalStructure::new(&[]).is_err());
        assert!(TemporalStructure::new(&[0, 1]).is_err());
        let trivial = TemporalStructure::new(&[1]).unwrap();
        assert_eq!((trivial.m(), trivial.k_star()), (1, 0));
    }

    #[test]
    fn each_block_covers_every_hour_once() {
        let te = TemporalStructure::new(&[12, 6, 4, 3, 2, 1]).unwrap();
        let s = te.summing_matrix().to_dense();
        for &k in te.orders() {
            let r = te.positions(k).unwrap();
            let block = s.rows(r.start, r.len());
            for h in 0..te.m() {
                assert_eq!(block.column(h).sum(), 1.0);
            }
        }
    }
}
