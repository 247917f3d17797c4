//! Cross-temporal forecast reconciliation.
//!
//! Forecasts for `n` series at every temporal aggregation order of a
//! seasonal cycle form an `n × (k* + m)` matrix `X` whose columns run from
//! the coarsest order down to the highest frequency. Vectors are in the
//! canonical layout `x = vec(Xᵀ)`, i.e. `X` row-major.
//!
//! * [`hierarchy`]: summing and constraint matrices, hierarchy files.
//! * [`covariance`]: the diagonal covariance menu (`ols`, `str`, `wlsv`, ...).
//! * [`projection`]: structural and zero-constrained projections.
//! * [`reconcile`]: the strategies and the batch runner.
//! * [`evaluate`]: nRMSE, MCB-Nemenyi ranks, gap traces, timing summaries.

pub mod covariance;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod projection;
pub mod reconcile;
pub mod simulate;
pub mod verify;

pub use covariance::{CovName, Covariance, DiagCov, Framework, ResidualSet};
pub use error::{Error, Result};
pub use exec::Exec;
pub use hierarchy::{CrossSectionalStructure, CrossTemporalStructure, TemporalStructure};
pub use reconcile::{
    CovarianceSet, ForecastBlock, IterOptions, Method, Order, ReconcileOptions, ReconcileReport, Reconciler, StopRule,
};
