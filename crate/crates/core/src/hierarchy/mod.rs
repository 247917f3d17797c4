//! Structural (summing) and zero-constraint matrices for the
//! cross-sectional, temporal and cross-temporal frameworks.

mod commutation;
mod cross_sectional;
mod cross_temporal;
pub mod spec_file;
mod temporal;

pub use commutation::Commutation;
pub use cross_sectional::CrossSectionalStructure;
pub use cross_temporal::{CrossTemporalStructure, KronOperator, DEFAULT_SIZE_CAP};
pub use spec_file::{load_hierarchy, parse_hierarchy, HierarchySpec};
pub use temporal::TemporalStructure;

use nalgebra::DMatrix;

use crate::error::Result;

pub fn build_cs(agg: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<CrossSectionalStructure> {
    CrossSectionalStructure::new(agg, labels)
}

pub fn build_te(orders: &[usize]) -> Result<TemporalStructure> {
    TemporalStructure::new(orders)
}

pub fn build_ct(cs: CrossSectionalStructure, te: TemporalStructure) -> Result<CrossTemporalStructure> {
    CrossTemporalStructure::new(cs, te)
}

pub fn commutation(nrows: usize, ncols: usize) -> Commutation {
    Commutation::new(nrows, ncols)
}
