//! Accuracy and significance evaluation.

mod mcb;

pub use mcb::{average_ranks, mcb_from_errors, studentized_range_cdf, studentized_range_quantile, McbResult};

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hierarchy::{CrossSectionalStructure, TemporalStructure};
use crate::linalg;
use crate::reconcile::{ForecastBlock, ReconcileReport};

/// Level of each series: bottom series are the deepest level, an upper
/// series sits one level above the deepest upper series it contains.
pub fn default_levels(cs: &CrossSectionalStructure) -> Vec<usize> {
    let n_u = cs.n_upper();
    let agg = cs.agg();
    let support = |u: usize| -> Vec<bool> { agg.row(u).iter().map(|a| *a != 0.0).collect() };
    let supports: Vec<Vec<bool>> = (0..n_u).map(support).collect();
    let contains = |a: usize, b: usize| {
        a != b
            && supports[b].iter().zip(&supports[a]).all(|(sb, sa)| !sb || *sa)
            && supports[a] != supports[b]
    };
    // height: 1 + longest chain of strictly contained uppers
    let mut height = vec![None; n_u];
    fn h(u: usize, n_u: usize, contains: &dyn Fn(usize, usize) -> bool, memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(v) = memo[u] {
            return v;
        }
        let v = 1 + (0..n_u).filter(|&v| contains(u, v)).map(|v| h(v, n_u, contains, memo)).max().unwrap_or(0);
        memo[u] = Some(v);
        v
    }
    let hs: Vec<usize> = (0..n_u).map(|u| h(u, n_u, &contains, &mut height)).collect();
    let top = hs.iter().copied().max().unwrap_or(0);
    hs.iter()
        .map(|hu| top - hu)
        .chain(std::iter::repeat_n(top, cs.n_bottom()))
        .collect()
}

/// Realized values, candidate forecasts and a level per series.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    te: TemporalStructure,
    labels: Vec<String>,
    actuals: Vec<ForecastBlock>,
    candidates: Vec<(String, Vec<ForecastBlock>)>,
    levels: Vec<usize>,
}

impl EvalFrame {
    pub fn new(cs: &CrossSectionalStructure, te: &TemporalStructure, actuals: Vec<ForecastBlock>) -> Result<Self> {
        Self::with_levels(cs, te, actuals, default_levels(cs))
    }

    pub fn with_levels(
        cs: &CrossSectionalStructure,
        te: &TemporalStructure,
        actuals: Vec<ForecastBlock>,
        levels: Vec<usize>,
    ) -> Result<Self> {
        if levels.len() != cs.n() {
            return Err(Error::dim("level map", cs.n(), levels.len()));
        }
        if actuals.is_empty() {
            return Err(Error::Invalid("no actuals".into()));
        }
        for a in &actuals {
            if a.n() != cs.n() || a.q() != te.len() {
                return Err(Error::dim(
                    format!("actuals for origin {}", a.origin_id),
                    format!("{} x {}", cs.n(), te.len()),
                    format!("{} x {}", a.n(), a.q()),
                ));
            }
        }
        Ok(EvalFrame {
            te: te.clone(),
            labels: cs.labels().to_vec(),
            actuals,
            candidates: Vec::new(),
            levels,
        })
    }

    /// Adds a candidate; its blocks must cover the actuals' origins in the
    /// same order.
    pub fn add_candidate(&mut self, name: impl Into<String>, blocks: Vec<ForecastBlock>) -> Result<()> {
        let name = name.into();
        if self.candidates.iter().any(|(c, _)| *c == name) {
            return Err(Error::Invalid(format!("duplicate candidate {name}")));
        }
        if blocks.len() != self.actuals.len() {
            return Err(Error::dim(format!("origins of candidate {name}"), self.actuals.len(), blocks.len()));
        }
        for (b, a) in blocks.iter().zip(&self.actuals) {
            if b.origin_id != a.origin_id {
                return Err(Error::Invalid(format!(
                    "candidate {name}: origin {} where actuals have {}",
                    b.origin_id, a.origin_id
                )));
            }
            if b.n() != a.n() || b.q() != a.q() {
                return Err(Error::dim(
                    format!("candidate {name} origin {}", b.origin_id),
                    format!("{} x {}", a.n(), a.q()),
                    format!("{} x {}", b.n(), b.q()),
                ));
            }
        }
        self.candidates.push((name, blocks));
        Ok(())
    }

    pub fn candidate_names(&self) -> Vec<String> {
        self.candidates.iter().map(|(c, _)| c.clone()).collect()
    }

    pub fn candidate_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|(c, _)| c == name)
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn orders(&self) -> &[usize] {
        self.te.orders()
    }

    pub fn origins(&self) -> usize {
        self.actuals.len()
    }

    fn positions(&self, k: usize) -> Result<std::ops::Range<usize>> {
        self.te
            .positions(k)
            .ok_or_else(|| Error::Invalid(format!("order {k} is not part of the temporal structure")))
    }
}

/// `100 · RMSE / mean(actual)` over pooled `(forecast, actual)` pairs;
/// `None` for an empty pool or a zero mean.
pub fn nrmse_pooled(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut se, mut sum, mut count) = (0.0, 0.0, 0usize);
    for (f, a) in pairs {
        se += (f - a) * (f - a);
        sum += a;
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let mean = sum / count as f64;
    if mean == 0.0 || !mean.is_finite() {
        return None;
    }
    Some(100.0 * (se / count as f64).sqrt() / mean)
}

/// nRMSE of candidate `candidate` for series `series` at order `k`, pooled
/// over every order-`k` cell of every origin.
pub fn nrmse(frame: &EvalFrame, series: usize, k: usize, candidate: usize) -> Result<Option<f64>> {
    let r = frame.positions(k)?;
    let (_, blocks) = frame
        .candidates
        .get(candidate)
        .ok_or_else(|| Error::Invalid(format!("no candidate {candidate}")))?;
    if series >= frame.labels.len() {
        return Err(Error::Invalid(format!("no series {series}")));
    }
    Ok(nrmse_pooled(blocks.iter().zip(&frame.actuals).flat_map(|(b, a)| {
        r.clone().map(move |t| (b.get(series, t), a.get(series, t)))
    })))
}

#[derive(Debug, Clone, Serialize)]
pub struct NrmseRow {
    pub level: usize,
    pub candidate: String,
    /// Per order, in the frame's order sequence; mean over the level's
    /// series with a defined nRMSE.
    pub values: Vec<Option<f64>>,
    /// Worse than the baseline at the same level and order.
    pub worse_than_baseline: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NrmseTable {
    pub orders: Vec<usize>,
    pub baseline: Option<String>,
    pub rows: Vec<NrmseRow>,
}

/// Level × candidate nRMSE table; rows grouped by level, candidates in
/// insertion order.
pub fn nrmse_table(frame: &EvalFrame, baseline: Option<&str>, exec: Exec) -> Result<NrmseTable> {
    let base_idx = match baseline {
        Some(b) => Some(
            frame
                .candidate_index(b)
                .ok_or_else(|| Error::Invalid(format!("baseline {b} is not a candidate")))?,
        ),
        None => None,
    };
    let orders = frame.orders().to_vec();
    let n = frame.labels.len();
    let nc = frame.candidates.len();
    // per (candidate, series, order) cell, in parallel
    let cells: Vec<Option<f64>> = exec
        .map_range(nc * n * orders.len(), |idx| {
            let c = idx / (n * orders.len());
            let i = (idx / orders.len()) % n;
            let k = orders[idx % orders.len()];
            nrmse(frame, i, k, c)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let cell = |c: usize, i: usize, ki: usize| cells[(c * n + i) * orders.len() + ki];

    let mut level_ids: Vec<usize> = frame.levels.clone();
    level_ids.sort_unstable();
    level_ids.dedup();

    let level_mean = |c: usize, level: usize, ki: usize| -> Option<f64> {
        let vals: Vec<f64> = (0..n)
            .filter(|&i| frame.levels[i] == level)
            .filter_map(|i| cell(c, i, ki))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    let mut rows = Vec::new();
    for &level in &level_ids {
        for (c, (name, _)) in frame.candidates.iter().enumerate() {
            let values: Vec<Option<f64>> = (0..orders.len()).map(|ki| level_mean(c, level, ki)).collect();
            let worse = (0..orders.len())
                .map(|ki| match (base_idx, values[ki]) {
                    (Some(b), Some(v)) if b != c => level_mean(b, level, ki).is_some_and(|bv| v > bv),
                    _ => false,
                })
                .collect();
            rows.push(NrmseRow {
                level,
                candidate: name.clone(),
                values,
                worse_than_baseline: worse,
            });
        }
    }
    Ok(NrmseTable {
        orders,
        baseline: baseline.map(String::from),
        rows,
    })
}

/// Mean absolute error of one (series, origin) case at order `k`.
fn case_mae(b: &ForecastBlock, a: &ForecastBlock, series: usize, r: std::ops::Range<usize>) -> f64 {
    let len = r.len() as f64;
    r.map(|t| (b.get(series, t) - a.get(series, t)).abs()).sum::<f64>() / len
}

/// MCB-Nemenyi at order `k` over the selected series. A case is one
/// (series, origin) pair, its error the MAE over the order-`k` positions.
pub fn mcb_nemenyi(frame: &EvalFrame, k: usize, series: &[usize], alpha: f64) -> Result<McbResult> {
    let r = frame.positions(k)?;
    if let Some(bad) = series.iter().find(|&&i| i >= frame.labels.len()) {
        return Err(Error::Invalid(format!("no series {bad}")));
    }
    let mut errors = Vec::with_capacity(series.len() * frame.origins());
    for &i in series {
        for (o, a) in frame.actuals.iter().enumerate() {
            errors.push(
                frame
                    .candidates
                    .iter()
                    .map(|(_, blocks)| case_mae(&blocks[o], a, i, r.clone()))
                    .collect(),
            );
        }
    }
    mcb_from_errors(&frame.candidate_names(), &errors, alpha)
}

/// Gaps `‖X̃_j − X̃_oct‖_F` for each kept iterate, then the gap of the
/// final result if it differs from the last iterate (or no iterates were
/// kept).
pub fn frobenius_trace(iter: &ReconcileReport, oct: &ReconcileReport) -> Result<Vec<f64>> {
    let target = oct.result.vectorize();
    if iter.result.vectorize().len() != target.len() {
        return Err(Error::dim("trace blocks", target.len(), iter.result.vectorize().len()));
    }
    let mut out: Vec<f64> = iter.iterates.iter().map(|x| linalg::diff_norm2(x, target)).collect();
    let last_is_result = iter.iterates.last().is_some_and(|x| x.as_slice() == iter.result.vectorize());
    if !last_is_result {
        out.push(linalg::diff_norm2(iter.result.vectorize(), target));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub method: String,
    pub iteration: usize,
    pub gap: f64,
    pub delta: f64,
}

pub fn trace_rows(method: &str, delta: f64, gaps: &[f64]) -> Vec<TraceRow> {
    gaps.iter()
        .enumerate()
        .map(|(j, g)| TraceRow {
            method: method.to_string(),
            iteration: j + 1,
            gap: *g,
            delta,
        })
        .collect()
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfRow {
    pub method: String,
    pub runs: usize,
    pub median_elapsed: f64,
    pub iqr_elapsed: f64,
    pub median_mem: f64,
    pub iqr_mem: f64,
    pub median_iterations: f64,
}

/// One measurement: `(method, elapsed seconds, peak bytes, iterations)`.
pub type PerfSample = (String, f64, usize, usize);

/// Medians and interquartile ranges per method, methods in order of first
/// appearance.
pub fn perf_summary(samples: &[PerfSample]) -> Vec<PerfRow> {
    let mut methods: Vec<&str> = Vec::new();
    for (m, ..) in samples {
        if !methods.contains(&m.as_str()) {
            methods.push(m);
        }
    }
    let summarize = |mut v: Vec<f64>| -> (f64, f64) {
        v.sort_by(f64::total_cmp);
        (quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
    };
    methods
        .into_iter()
        .map(|m| {
            let rows: Vec<&PerfSample> = samples.iter().filter(|s| s.0 == m).collect();
            let (me, ie) = summarize(rows.iter().map(|s| s.1).collect());
            let (mm, im) = summarize(rows.iter().map(|s| s.2 as f64).collect());
            let (mi, _) = summarize(rows.iter().map(|s| s.3 as f64).collect());
            PerfRow {
                method: m.to_string(),
                runs: rows.len(),
                median_elapsed: me,
                iqr_elapsed: ie,
                median_mem: mm,
                iqr_mem: im,
                median_iterations: mi,
            }
        })
        .collect()
}

pub fn perf_samples(reports: &[ReconcileReport]) -> Vec<PerfSample> {
    reports
        .iter()
        .map(|r| (r.method.clone(), r.elapsed, r.peak_mem, r.iterations))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `level,candidate,k{order}...,worse_k{order}...`; missing cells empty.
pub fn write_nrmse_csv(path: &Path, table: &NrmseTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["level".to_string(), "candidate".to_string()];
    header.extend(table.orders.iter().map(|k| format!("k{k}")));
    header.extend(table.orders.iter().map(|k| format!("worse_k{k}")));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![format!("L{}", r.level), r.candidate.clone()];
        rec.extend(r.values.iter().map(|v| fmt_opt(*v)));
        rec.extend(r.worse_than_baseline.iter().map(|b| u8::from(*b).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `selection,order,candidate,mean_rank,lower,upper,cd,cases,best,differs_from_best`.
pub fn write_ranks_csv(path: &Path, results: &[(String, usize, McbResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "selection",
        "order",
        "candidate",
        "mean_rank",
        "lower",
        "upper",
        "cd",
        "cases",
        "best",
        "differs_from_best",
    ])?;
    for (sel, k, r) in results {
        for (j, name) in r.candidates.iter().enumerate() {
            let (lo, hi) = r.interval(j);
            w.write_record([
                sel.clone(),
                k.to_string(),
                name.clone(),
                r.mean_ranks[j].to_string(),
                lo.to_string(),
                hi.to_string(),
                r.cd.to_string(),
                r.cases.to_string(),
                u8::from(j == r.best).to_string(),
                u8::from(r.differs_from_best[j]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_perf_csv(path: &Path, rows: &[PerfRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["method", "runs", "median_elapsed", "iqr_elapsed", "median_mem", "iqr_mem", "median_iterations"])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `method,iteration,gap,delta`.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "iteration", "gap", "delta"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.iteration.to_string(), r.gap.to_string(), r.delta.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_frame(actual: f64, fc: &[(&str, f64)]) -> EvalFrame {
        let cs = CrossSectionalStructure::star(2).unwrap();
        let te = TemporalStructure::new(&[2, 1]).unwrap();
        let a = vec![ForecastBlock::new("0", 3, 3, vec![actual; 9]).unwrap()];
        let mut f = EvalFrame::new(&cs, &te, a).unwrap();
        for (name, v) in fc {
            f.add_candidate(*name, vec![ForecastBlock::new("0", 3, 3, vec![*v; 9]).unwrap()])
                .unwrap();
        }
        f
    }

    #[test]
    fn constant_and_two_point_cases() {
        let f = star_frame(2.0, &[("x", 3.0), ("y", 2.0)]);
        assert_eq!(nrmse(&f, 0, 1, 0).unwrap(), Some(50.0));
        assert_eq!(nrmse(&f, 2, 2, 1).unwrap(), Some(0.0));
        assert_eq!(nrmse_pooled([(3.0, 2.0), (1.0, 2.0)]), Some(50.0));
        assert_eq!(nrmse_pooled([(1.0, 0.0)]), None);
        assert!(nrmse(&f, 0, 5, 0).is_err());
    }

    #[test]
    fn levels_of_a_three_tier_hierarchy() {
        let cs = CrossSectionalStructure::two_level(&[2, 3]).unwrap();
        assert_eq!(default_levels(&cs), vec![0, 1, 1, 2, 2, 2, 2, 2]);
        let star = CrossSectionalStructure::star(3).unwrap();
        assert_eq!(default_levels(&star), vec![0, 1, 1, 1]);
    }

    #[test]
    fn dominated_candidate_flagged_everywhere() {
        let f = star_frame(2.0, &[("good", 2.1), ("bad", 3.0)]);
        let t = nrmse_table(&f, Some("good"), Exec::Sequential).unwrap();
        assert_eq!(t.rows.len(), 4);
        for r in &t.rows {
            let expect = r.candidate == "bad";
            assert!(r.worse_than_baseline.iter().all(|w| *w == expect));
        }
    }

    #[test]
    fn quantiles_and_perf() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        let rows = perf_summary(&[
            ("b".into(), 2.0, 10, 1),
            ("a".into(), 1.0, 5, 3),
            ("b".into(), 4.0, 30, 1),
        ]);
        assert_eq!(rows[0].method, "b");
        assert_eq!(rows[0].median_elapsed, 3.0);
        assert_eq!(rows[0].median_mem, 20.0);
        assert_eq!(rows[1].runs, 1);
        assert_eq!(rows[1].iqr_elapsed, 0.0);
    }
}
