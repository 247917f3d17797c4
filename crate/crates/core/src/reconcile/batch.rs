use std::cmp::Ordering;

use crate::error::Result;
use crate::exec::Exec;

use super::{ForecastBlock, ReconcileReport, Reconciler};

/// Reconciles every block; results come back in input order.
pub fn reconcile_batch(rec: &Reconciler<'_>, blocks: &[ForecastBlock], exec: Exec) -> Vec<Result<ReconcileReport>> {
    exec.map(blocks, |b| rec.reconcile(b))
}

fn cmp_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Sorts by origin id, numerically when both ids are integers.
pub fn sort_origin_ids(blocks: &mut [ForecastBlock]) {
    blocks.sort_by(|a, b| cmp_ids(&a.origin_id, &b.origin_id));
}
