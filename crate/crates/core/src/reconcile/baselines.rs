use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;

use super::{coherence_of, ForecastBlock, ReconcileReport};

/// Clamps negative highest-frequency bottom values to zero and rebuilds
/// every other cell by aggregation.
pub fn sntz_block(ct: &CrossTemporalStructure, block: &ForecastBlock) -> ForecastBlock {
    let mut b = ct.bottom_hourly(block.vectorize());
    for v in &mut b {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    block.with_values(ct.bottom_up(&b))
}

/// [`sntz_block`] on a report's result. Coherence is recomputed and an
/// `sntz:<count>` flag records how many cells were clamped.
pub fn sntz(ct: &CrossTemporalStructure, mut report: ReconcileReport) -> ReconcileReport {
    let (cs, te) = report.relative_coherence();
    if cs > 1e-6 || te > 1e-6 {
        log::warn!(
            "sntz on origin {} whose input is not cross-temporally coherent",
            report.origin_id
        );
        report.flags.push("sntz-incoherent-input".into());
    }
    let negatives = ct
        .bottom_hourly(report.result.vectorize())
        .iter()
        .filter(|v| **v < 0.0)
        .count();
    report.result = sntz_block(ct, &report.result);
    report.coherence = coherence_of(ct, report.result.vectorize());
    report.flags.push(format!("sntz:{negatives}"));
    report
}

/// Cross-temporal bottom-up from the block's own highest-frequency bottom
/// forecasts.
pub fn baseline_bu(ct: &CrossTemporalStructure, block: &ForecastBlock) -> Result<ForecastBlock> {
    block.check_structure(ct)?;
    Ok(block.with_values(ct.bottom_up(&ct.bottom_hourly(block.vectorize()))))
}

/// Seasonal persistence at the highest frequency for the bottom series,
/// bottom-up elsewhere. `history[b]` holds the observed highest-frequency
/// values of bottom series `b`; its last `m` values are the forecast.
pub fn baseline_pers_bu(
    ct: &CrossTemporalStructure,
    origin_id: impl Into<String>,
    history: &[Vec<f64>],
) -> Result<ForecastBlock> {
    let n_b = ct.cs().n_bottom();
    let m = ct.te().m();
    if history.len() != n_b {
        return Err(Error::dim("pers-bu history (bottom series)", n_b, history.len()));
    }
    let mut bottom = Vec::with_capacity(n_b * m);
    for (b, h) in history.iter().enumerate() {
        if h.len() < m {
            let label = &ct.cs().labels()[ct.cs().n_upper() + b];
            return Err(Error::Invalid(format!(
                "pers-bu history for series {label} has {} values, needs at least {m}",
                h.len()
            )));
        }
        bottom.extend_from_slice(&h[h.len() - m..]);
    }
    ForecastBlock::for_structure(origin_id, ct, ct.bottom_up(&bottom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{CrossSectionalStructure, TemporalStructure};

    fn toy() -> CrossTemporalStructure {
        CrossTemporalStructure::new(
            CrossSectionalStructure::star(2).unwrap(),
            TemporalStructure::new(&[2, 1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pers_bu_toy() {
        let ct = toy();
        let b = baseline_pers_bu(&ct, "0", &[vec![9.0, 1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // first bottom: k=2 cell is 1 + 2
        assert_eq!(b.get(1, 0), 3.0);
        assert_eq!(b.get(0, 0), 10.0);
        assert_eq!(b.series(0), &[10.0, 4.0, 6.0]);
        assert!(baseline_pers_bu(&ct, "0", &[vec![1.0], vec![3.0, 4.0]]).is_err());
    }

    #[test]
    fn pers_bu_constant_history() {
        let ct = CrossTemporalStructure::new(
            CrossSectionalStructure::star(3).unwrap(),
            TemporalStructure::new(&[4, 2, 1]).unwrap(),
        )
        .unwrap();
        let c = 1.5;
        let b = baseline_pers_bu(&ct, "0", &vec![vec![c; 4]; 3]).unwrap();
        for t in 0..ct.q() {
            let k = ct.te().order_of(t) as f64;
            assert_eq!(b.get(0, t), 3.0 * c * k);
            for s in 1..4 {
                assert_eq!(b.get(s, t), c * k);
            }
        }
    }

    #[test]
    fn sntz_single_negative_cell() {
        let ct = toy();
        let x = ct.bottom_up(&[1.0, -0.5, 3.0, 4.0]);
        let b = ForecastBlock::for_structure("0", &ct, x).unwrap();
        let s = sntz_block(&ct, &b);
        assert_eq!(s.vectorize(), ct.bottom_up(&[1.0, 0.0, 3.0, 4.0]).as_slice());
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.get(0, 0), 8.0);
        let nonneg = ForecastBlock::for_structure("0", &ct, ct.bottom_up(&[1.0, 0.5, 3.0, 4.0])).unwrap();
        assert_eq!(sntz_block(&ct, &nonneg), nonneg);
    }

    #[test]
    fn bu_rebuilds_from_bottom() {
        let ct = toy();
        let b = ForecastBlock::for_structure("0", &ct, vec![0.0, 0.0, 0.0, 9.0, 1.0, 2.0, 9.0, 3.0, 4.0]).unwrap();
        let r = baseline_bu(&ct, &b).unwrap();
        assert_eq!(r.vectorize(), &[10.0, 4.0, 6.0, 3.0, 1.0, 2.0, 7.0, 3.0, 4.0]);
    }
}
