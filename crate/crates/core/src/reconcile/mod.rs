//! Reconciliation strategies.
//!
//! A [`Reconciler`] factors every projection a method needs once, then
//! applies it to any number of forecast origins. The free functions
//! (`reconcile_cs`, `reconcile_oct`, ...) are one-off conveniences.

mod baselines;
mod batch;
mod block;
mod method;

pub use baselines::{baseline_bu, baseline_pers_bu, sntz, sntz_block};
pub use batch::{reconcile_batch, sort_origin_ids};
pub use block::ForecastBlock;
pub use method::{Method, Order, Profile};

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::covariance::{Covariance, CovName, CovarianceSpec, DiagCov, Framework, ResidualSet, WlsvOptions};
use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;
use crate::linalg;
use crate::projection::{
    averaged_cs_projector, averaged_te_projector, AveragedProjector, CsProjector, OctProjector, OctSolver, Projector,
    ProjectorKind, TeProjector,
};

/// Largest dimension [`Reconciler::dense_operator`] will materialize.
pub const DENSE_OPERATOR_CAP: usize = 5000;

/// When the iterative heuristic stops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// After cycle `j`, stop when the next half-step would move `x_j` by at
    /// most `δ · max(1, ‖x_j‖)`. A fixed point of both projections stops
    /// after one cycle.
    #[default]
    LookAhead,
    /// Stop when `‖x_j − x_{j−1}‖ ≤ δ · max(1, ‖x_{j−1}‖)`.
    CycleChange,
    /// Stop when the incoherence in the first-applied dimension is at most
    /// `δ · max(1, ‖x_j‖_max)`.
    Incoherence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    pub delta: f64,
    pub max_iter: usize,
    pub stop: StopRule,
    /// Keep every cycle's iterate in the report (for gap traces).
    pub keep_iterates: bool,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            delta: 1e-6,
            max_iter: 100,
            stop: StopRule::LookAhead,
            keep_iterates: false,
        }
    }
}

impl IterOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReconcileOptions {
    pub iter: IterOptions,
    pub oct_solver: OctSolver,
    pub sntz: bool,
    /// Sequential methods also run the opposite order and report the gap.
    pub cross_gap: bool,
}

/// The covariances of one run, one per framework.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub label: String,
    pub cs: Covariance,
    pub te: Covariance,
    pub ct: Covariance,
    /// `(series, order)` cells raised to the wlsv variance floor.
    pub floored: Vec<(usize, usize)>,
}

impl CovarianceSet {
    pub fn named(ct: &CrossTemporalStructure, name: CovName, residuals: Option<&ResidualSet>) -> Result<Self> {
        Self::named_with(ct, name, residuals, WlsvOptions::default())
    }

    pub fn named_with(
        ct: &CrossTemporalStructure,
        name: CovName,
        residuals: Option<&ResidualSet>,
        wlsv: WlsvOptions,
    ) -> Result<Self> {
        let build = |framework| {
            let mut spec = CovarianceSpec::new(name, framework);
            spec.wlsv = wlsv;
            if let Some(r) = residuals {
                spec = spec.with_residuals(r);
            }
            spec.build(ct)
        };
        let cs = build(Framework::Cs)?;
        let te = build(Framework::Te)?;
        let ctb = build(Framework::Ct)?;
        Ok(CovarianceSet {
            label: name.to_string(),
            cs: cs.cov.into(),
            te: te.cov.into(),
            ct: ctb.cov.into(),
            floored: ctb.floored,
        })
    }

    /// The same diagonal in every framework.
    pub fn uniform(label: impl Into<String>, sigma: DiagCov) -> Self {
        let c: Covariance = sigma.into();
        CovarianceSet {
            label: label.into(),
            cs: c.clone(),
            te: c.clone(),
            ct: c,
            floored: Vec::new(),
        }
    }

    pub fn from_parts(label: impl Into<String>, cs: Covariance, te: Covariance, ct: Covariance) -> Self {
        CovarianceSet {
            label: label.into(),
            cs,
            te,
            ct,
            floored: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coherence {
    /// `‖C_cs X̃‖_max`
    pub cs: f64,
    /// `‖X̃ C_teᵀ‖_max`
    pub te: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconcileReport {
    pub origin_id: String,
    pub method: String,
    pub covariance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub coherence: Coherence,
    /// Frobenius gap between the two orders of a sequential method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_gap: Option<f64>,
    pub flags: Vec<String>,
    /// Seconds spent on this origin.
    pub elapsed: f64,
    /// Analytic estimate: factored operators plus live working vectors.
    pub peak_mem: usize,
    #[serde(skip)]
    pub result: ForecastBlock,
    /// Cycle iterates `x_1, …, x_J` when requested.
    #[serde(skip)]
    pub iterates: Vec<Vec<f64>>,
}

impl ReconcileReport {
    /// One JSON object; `elapsed` is left out unless `timing` is set so that
    /// report files are reproducible byte for byte.
    pub fn to_json_line(&self, timing: bool) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if !timing {
            if let Some(o) = v.as_object_mut() {
                o.remove("elapsed");
            }
        }
        Ok(serde_json::to_string(&v)?)
    }

    /// Coherence residuals relative to `max(1, ‖X̃‖_max)`.
    pub fn relative_coherence(&self) -> (f64, f64) {
        let s = self.result.max_abs().max(1.0);
        (self.coherence.cs / s, self.coherence.te / s)
    }
}

pub(crate) fn coherence_of(ct: &CrossTemporalStructure, x: &[f64]) -> Coherence {
    let (cs, te) = ct.coherence_residuals(x);
    Coherence { cs, te }
}

/// A uni-dimensional projection.
#[derive(Debug, Clone)]
enum Uni {
    Cs(CsProjector),
    Te(TeProjector),
    General(Projector),
}

impl Uni {
    fn build(ct: &CrossTemporalStructure, framework: Framework, sigma: &Covariance) -> Result<Self> {
        match (framework, sigma.as_diagonal()) {
            (Framework::Cs, Some(d)) => Ok(Uni::Cs(CsProjector::new(ct, d)?)),
            (Framework::Te, Some(d)) => Ok(Uni::Te(TeProjector::new(ct, d)?)),
            (Framework::Ct, _) => unreachable!("uni-dimensional stage"),
            (fw, None) => Ok(Uni::General(Projector::for_framework(
                ct,
                fw,
                ProjectorKind::ZeroConstrained,
                sigma,
            )?)),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Uni::Cs(p) => p.apply(x),
            Uni::Te(p) => p.apply(x),
            Uni::General(p) => p.apply(x),
        }
    }

    fn storage_bytes(&self) -> usize {
        match self {
            Uni::Cs(p) => p.storage_bytes(),
            Uni::Te(p) => p.storage_bytes(),
            Uni::General(p) => p.storage_bytes(),
        }
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Cs(Uni),
    Te(Uni),
    Oct(OctProjector),
    Seq { order: Order, cs: Uni, te: Uni },
    Ka { first: Uni, avg: AveragedProjector },
    Ite { order: Order, cs: Uni, te: Uni },
    Bu,
}

/// Pre-factored reconciliation of one method with one covariance set.
#[derive(Debug, Clone)]
pub struct Reconciler<'a> {
    ct: &'a CrossTemporalStructure,
    method: Method,
    cov_label: String,
    opts: ReconcileOptions,
    plan: Plan,
    flags: Vec<String>,
}

fn diag<'c>(c: &'c Covariance, what: &str) -> Result<&'c DiagCov> {
    c.as_diagonal()
        .ok_or_else(|| Error::Unsupported(format!("{what} requires a diagonal covariance")))
}

impl<'a> Reconciler<'a> {
    pub fn new(
        ct: &'a CrossTemporalStructure,
        method: Method,
        covs: &CovarianceSet,
        opts: ReconcileOptions,
    ) -> Result<Self> {
        opts.iter.validate()?;
        for (c, fw) in [(&covs.cs, "cs"), (&covs.te, "te"), (&covs.ct, "ct")] {
            if c.dim() != ct.dim() {
                return Err(Error::dim(format!("{fw} covariance"), ct.dim(), c.dim()));
            }
        }
        let plan = match method {
            Method::Cs => Plan::Cs(Uni::build(ct, Framework::Cs, &covs.cs)?),
            Method::Te => Plan::Te(Uni::build(ct, Framework::Te, &covs.te)?),
            Method::Oct => Plan::Oct(OctProjector::new(ct, &covs.ct, opts.oct_solver)?),
            Method::Seq(order) => Plan::Seq {
                order,
                cs: Uni::build(ct, Framework::Cs, &covs.cs)?,
                te: Uni::build(ct, Framework::Te, &covs.te)?,
            },
            Method::Ka(order) => {
                let cs = diag(&covs.cs, "ka")?;
                let te = diag(&covs.te, "ka")?;
                match order {
                    Order::Cst => {
                        let rows: Vec<Vec<f64>> = (0..ct.n()).map(|i| te.row(i).to_vec()).collect();
                        Plan::Ka {
                            first: Uni::Cs(CsProjector::new(ct, cs)?),
                            avg: averaged_te_projector(ct, &rows)?,
                        }
                    }
                    Order::Tcs => Plan::Ka {
                        first: Uni::Te(TeProjector::new(ct, te)?),
                        avg: averaged_cs_projector(ct, &cs.per_order(ct)?)?,
                    },
                }
            }
            Method::Ite(order) => Plan::Ite {
                order,
                cs: Uni::build(ct, Framework::Cs, &covs.cs)?,
                te: Uni::build(ct, Framework::Te, &covs.te)?,
            },
            Method::Bu => Plan::Bu,
            Method::PersBu => {
                return Err(Error::Unsupported(
                    "pers-bu works from history; use baseline_pers_bu".into(),
                ))
            }
        };
        let mut flags = Vec::new();
        if !covs.floored.is_empty() && method != Method::Bu {
            flags.push(format!("wlsv-floor:{}", covs.floored.len()));
        }
        Ok(Reconciler {
            ct,
            method,
            cov_label: covs.label.clone(),
            opts,
            plan,
            flags,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn structure(&self) -> &CrossTemporalStructure {
        self.ct
    }

    pub fn options(&self) -> &ReconcileOptions {
        &self.opts
    }

    pub fn solver_name(&self) -> Option<&'static str> {
        match &self.plan {
            Plan::Oct(p) => Some(p.solver_name()),
            _ => None,
        }
    }

    pub fn storage_bytes(&self) -> usize {
        match &self.plan {
            Plan::Cs(u) | Plan::Te(u) => u.storage_bytes(),
            Plan::Oct(p) => p.storage_bytes(),
            Plan::Seq { cs, te, .. } | Plan::Ite { cs, te, .. } => cs.storage_bytes() + te.storage_bytes(),
            Plan::Ka { first, avg, .. } => first.storage_bytes() + avg.storage_bytes(),
            Plan::Bu => 0,
        }
    }

    pub fn reconcile(&self, block: &ForecastBlock) -> Result<ReconcileReport> {
        block.check_structure(self.ct)?;
        let start = Instant::now();
        let x = block.vectorize();
        let dim = x.len();
        let mut flags = self.flags.clone();
        let mut cross_gap = None;
        let mut iterations = 1;
        let mut converged = true;
        let mut iterates = Vec::new();
        let mut live_vectors = 2;

        let (out, trace) = match &self.plan {
            Plan::Cs(u) | Plan::Te(u) => one_shot(x, u.apply(x)),
            Plan::Oct(p) => one_shot(x, p.apply(x)),
            Plan::Seq { order, cs, te } => {
                let run = |o: Order| match o {
                    Order::Cst => te.apply(&cs.apply(x)),
                    Order::Tcs => cs.apply(&te.apply(x)),
                };
                let y = run(*order);
                live_vectors = 3;
                if self.opts.cross_gap {
                    let other = run(order.flip());
                    cross_gap = Some(linalg::diff_norm2(&y, &other));
                    live_vectors = 4;
                }
                one_shot(x, y)
            }
            Plan::Ka { first, avg, .. } => {
                live_vectors = 3;
                let y = first.apply(x);
                one_shot(x, avg.apply(self.ct.n(), self.ct.q(), &y))
            }
            Plan::Ite { order, cs, te } => {
                let (first, second) = match order {
                    Order::Cst => (cs, te),
                    Order::Tcs => (te, cs),
                };
                let outcome = self.iterate(first, second, order.first_framework(), x);
                iterations = outcome.iterations;
                converged = outcome.converged;
                iterates = outcome.iterates;
                live_vectors = 4 + iterates.len();
                if !converged {
                    flags.push(format!("non-converged:max_iter={}", self.opts.iter.max_iter));
                }
                (outcome.x, outcome.trace)
            }
            Plan::Bu => {
                let b = self.ct.bottom_hourly(x);
                one_shot(x, self.ct.bottom_up(&b))
            }
        };

        let result = block.with_values(out);
        let mut report = ReconcileReport {
            origin_id: block.origin_id.clone(),
            method: self.method.to_string(),
            covariance: self.cov_label.clone(),
            solver: self.solver_name().map(String::from),
            iterations,
            converged,
            trace,
            coherence: coherence_of(self.ct, result.vectorize()),
            cross_gap,
            flags,
            elapsed: 0.0,
            peak_mem: self.storage_bytes() + live_vectors * dim * 8,
            result,
            iterates,
        };
        if report.trace.iter().any(|v| !v.is_finite()) || report.result.vectorize().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} output for origin {}", self.method, block.origin_id)));
        }
        if self.opts.sntz {
            report = sntz(self.ct, report);
        }
        self.flag_incoherence(&mut report);
        report.elapsed = start.elapsed().as_secs_f64();
        Ok(report)
    }

    /// The method's linear operator, one applied unit vector per column.
    /// Only for linear methods (not iterative, not with sntz).
    pub fn dense_operator(&self) -> Result<DMatrix<f64>> {
        if self.method.is_iterative() || self.opts.sntz {
            return Err(Error::Unsupported(format!("{} with these options is not a linear map", self.method)));
        }
        let d = self.ct.dim();
        if d > DENSE_OPERATOR_CAP {
            return Err(Error::SizeCap {
                size: d,
                cap: DENSE_OPERATOR_CAP,
            });
        }
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for c in 0..d {
            e[c] = 1.0;
            let b = ForecastBlock::for_structure("unit", self.ct, e.clone())?;
            let y = self.reconcile(&b)?.result.into_values();
            m.set_column(c, &nalgebra::DVector::from_vec(y));
            e[c] = 0.0;
        }
        Ok(m)
    }

    fn flag_incoherence(&self, report: &mut ReconcileReport) {
        let profile = if self.opts.sntz { Profile::BOTH } else { self.method.profile() };
        let (cs, te) = report.relative_coherence();
        if profile.cs && cs > 1e-8 {
            report.flags.push(format!("cs-incoherent:{cs:e}"));
        }
        if profile.te && te > 1e-8 {
            report.flags.push(format!("te-incoherent:{te:e}"));
        }
    }

    fn iterate(&self, first: &Uni, second: &Uni, first_fw: Framework, x0: &[f64]) -> IterOutcome {
        let o = self.opts.iter;
        let mut prev = x0.to_vec();
        // first-stage projection of the current iterate
        let mut y = first.apply(&prev);
        let mut trace = Vec::new();
        let mut iterates = Vec::new();
        for j in 1..=o.max_iter {
            let x = second.apply(&y);
            let change = linalg::diff_norm2(&x, &prev);
            trace.push(change);
            if o.keep_iterates {
                iterates.push(x.clone());
            }
            let next = first.apply(&x);
            let stop = match o.stop {
                StopRule::LookAhead => linalg::diff_norm2(&next, &x) <= o.delta * linalg::norm2(&x).max(1.0),
                StopRule::CycleChange => change <= o.delta * linalg::norm2(&prev).max(1.0),
                StopRule::Incoherence => {
                    let (cs, te) = self.ct.coherence_residuals(&x);
                    let r = if first_fw == Framework::Cs { cs } else { te };
                    r <= o.delta * linalg::max_abs(&x).max(1.0)
                }
            };
            if stop || !change.is_finite() {
                return IterOutcome {
                    x,
                    trace,
                    iterations: j,
                    converged: stop,
                    iterates,
                };
            }
            prev = x;
            y = next;
        }
        // `prev` is the last iterate, coherent in the second dimension
        IterOutcome {
            x: prev,
            trace,
            iterations: o.max_iter,
            converged: false,
            iterates,
        }
    }
}

fn one_shot(x: &[f64], y: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let gap = linalg::diff_norm2(&y, x);
    (y, vec![gap])
}

struct IterOutcome {
    x: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    iterates: Vec<Vec<f64>>,
}

fn run_with(
    ct: &CrossTemporalStructure,
    block: &ForecastBlock,
    method: Method,
    covs: &CovarianceSet,
    opts: ReconcileOptions,
) -> Result<ReconcileReport> {
    Reconciler::new(ct, method, covs, opts)?.reconcile(block)
}

fn placeholder(ct: &CrossTemporalStructure) -> Covariance {
    DiagCov::identity(ct.n(), ct.q()).into()
}

/// Cross-sectional reconciliation, `x̃ = M_cs x̂`.
pub fn reconcile_cs(ct: &CrossTemporalStructure, block: &ForecastBlock, sigma_cs: &Covariance) -> Result<ReconcileReport> {
    let covs = CovarianceSet::from_parts("custom", sigma_cs.clone(), placeholder(ct), placeholder(ct));
    run_with(ct, block, Method::Cs, &covs, ReconcileOptions::default())
}

/// Temporal reconciliation, `x̃ = M_te x̂`.
pub fn reconcile_te(ct: &CrossTemporalStructure, block: &ForecastBlock, sigma_te: &Covariance) -> Result<ReconcileReport> {
    let covs = CovarianceSet::from_parts("custom", placeholder(ct), sigma_te.clone(), placeholder(ct));
    run_with(ct, block, Method::Te, &covs, ReconcileOptions::default())
}

/// Optimal cross-temporal reconciliation with `Σ_ct`.
pub fn reconcile_oct(
    ct: &CrossTemporalStructure,
    block: &ForecastBlock,
    sigma_ct: &Covariance,
    solver: OctSolver,
) -> Result<ReconcileReport> {
    let covs = CovarianceSet::from_parts("custom", placeholder(ct), placeholder(ct), sigma_ct.clone());
    let opts = ReconcileOptions {
        oct_solver: solver,
        ..Default::default()
    };
    run_with(ct, block, Method::Oct, &covs, opts)
}

/// One pass in each dimension; the report carries the gap to the
/// opposite order.
pub fn reconcile_seq(
    ct: &CrossTemporalStructure,
    block: &ForecastBlock,
    sigma_cs: &Covariance,
    sigma_te: &Covariance,
    order: Order,
) -> Result<ReconcileReport> {
    let covs = CovarianceSet::from_parts("custom", sigma_cs.clone(), sigma_te.clone(), placeholder(ct));
    let opts = ReconcileOptions {
        cross_gap: true,
        ..Default::default()
    };
    run_with(ct, block, Method::Seq(order), &covs, opts)
}

/// KA heuristic from per-order `W^[k]` and per-series `Ω_i` diagonals.
pub fn reconcile_ka(
    ct: &CrossTemporalStructure,
    block: &ForecastBlock,
    w_per_order: &[Vec<f64>],
    omega_per_series: &[Vec<f64>],
    order: Order,
) -> Result<ReconcileReport> {
    let cs = DiagCov::from_per_order(ct, w_per_order)?;
    let te = DiagCov::from_per_series(ct, omega_per_series)?;
    let covs = CovarianceSet::from_parts("custom", cs.into(), te.into(), placeholder(ct));
    run_with(ct, block, Method::Ka(order), &covs, ReconcileOptions::default())
}

/// Alternating uni-dimensional reconciliation until `opts` says stop.
pub fn reconcile_iterative(
    ct: &CrossTemporalStructure,
    block: &ForecastBlock,
    sigma_cs: &Covariance,
    sigma_te: &Covariance,
    order: Order,
    opts: IterOptions,
) -> Result<ReconcileReport> {
    let covs = CovarianceSet::from_parts("custom", sigma_cs.clone(), sigma_te.clone(), placeholder(ct));
    let opts = ReconcileOptions {
        iter: opts,
        ..Default::default()
    };
    run_with(ct, block, Method::Ite(order), &covs, opts)
}
