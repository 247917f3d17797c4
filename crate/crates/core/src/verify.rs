//! Randomized checks of the equivalence and convergence results.
//!
//! * Equivalence: with `W` constant across orders and `Ω` constant across
//!   series, the sequential, KA and iterative heuristics all coincide with
//!   the optimal projection under `W ⊗ Ω`, and the iterative method stops
//!   after one cycle.
//! * Convergence: with series variance scaling (`Σ_cs = Σ_te`), iterating
//!   approaches the optimal projection as the tolerance shrinks, from either
//!   starting dimension.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::covariance::{CovName, DiagCov, ResidualSet};
use crate::error::Result;
use crate::exec::Exec;
use crate::hierarchy::{CrossSectionalStructure, CrossTemporalStructure, TemporalStructure};
use crate::linalg;
use crate::projection::OctSolver;
use crate::reconcile::{CovarianceSet, ForecastBlock, IterOptions, Method, Order, ReconcileOptions, Reconciler};
use crate::simulate::{simulate, SimConfig};

/// Random hierarchy with `n ≤ max_n` series of which `1..=max_upper` are
/// upper series; the first upper series is the grand total.
pub fn random_hierarchy(rng: &mut impl Rng, max_n: usize, max_upper: usize) -> CrossSectionalStructure {
    assert!(max_n >= 3 && max_upper >= 1);
    let n_u = rng.random_range(1..=max_upper.min(max_n - 2));
    let n_b = rng.random_range(2..=max_n - n_u);
    let mut agg = DMatrix::zeros(n_u, n_b);
    agg.row_mut(0).fill(1.0);
    for u in 1..n_u {
        let size = rng.random_range(1..=n_b);
        let mut cols: Vec<usize> = (0..n_b).collect();
        cols.shuffle(rng);
        for &c in &cols[..size] {
            agg[(u, c)] = 1.0;
        }
    }
    CrossSectionalStructure::new(agg, None).expect("valid random hierarchy")
}

/// Random subset of the divisors of `m` that keeps `m` and 1.
pub fn random_temporal(rng: &mut impl Rng, m: usize) -> TemporalStructure {
    let orders: Vec<usize> = (1..=m)
        .filter(|k| m.is_multiple_of(*k))
        .filter(|&k| k == 1 || k == m || rng.random_bool(0.6))
        .collect();
    TemporalStructure::new(&orders).expect("divisors of m")
}

pub fn random_block(rng: &mut impl Rng, ct: &CrossTemporalStructure, id: &str) -> ForecastBlock {
    let nd = Normal::new(0.0, 1.0).expect("unit normal");
    // coherent signal plus incoherent noise
    let bottom: Vec<f64> = (0..ct.cs().n_bottom() * ct.te().m())
        .map(|_| rng.random_range(1.0..5.0))
        .collect();
    let x: Vec<f64> = ct.bottom_up(&bottom).into_iter().map(|v| v + v.abs().sqrt() * nd.sample(rng)).collect();
    ForecastBlock::for_structure(id, ct, x).expect("finite")
}

fn positive(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.1..10.0)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    /// Largest relative gap or residual observed.
    pub max_observed: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} instances, max observed {:.3e} (tolerance {:.0e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_observed,
            self.tolerance,
            if self.detail.is_empty() { String::new() } else { format!("; {}", self.detail) }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub equivalence_instances: usize,
    pub convergence_instances: usize,
    pub max_n: usize,
    pub max_upper: usize,
    /// Residual periods for the variance estimates.
    pub train: usize,
    /// Replace the residuals by zeros, forcing every variance to the floor.
    pub adversarial: bool,
    pub max_iter: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 2024,
            equivalence_instances: 50,
            convergence_instances: 20,
            max_n: 30,
            max_upper: 8,
            train: 20,
            adversarial: false,
            max_iter: 100_000,
        }
    }
}

pub const SEASONS: [usize; 3] = [4, 12, 24];

fn instance_rng(seed: u64, suite: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((suite << 32) + i as u64);
    r
}

fn random_structure(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> CrossTemporalStructure {
    let cs = random_hierarchy(rng, cfg.max_n, cfg.max_upper);
    let m = SEASONS[rng.random_range(0..SEASONS.len())];
    let te = random_temporal(rng, m);
    CrossTemporalStructure::new(cs, te).expect("small structure")
}

/// Outcome of one equivalence instance.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceOutcome {
    pub n: usize,
    pub m: usize,
    /// Largest pairwise Frobenius gap over `‖X̂‖_F`.
    pub max_gap: f64,
    pub ite_iterations: [usize; 2],
}

pub const EQUIVALENCE_METHODS: [Method; 7] = [
    Method::Seq(Order::Cst),
    Method::Seq(Order::Tcs),
    Method::Ka(Order::Cst),
    Method::Ka(Order::Tcs),
    Method::Ite(Order::Cst),
    Method::Ite(Order::Tcs),
    Method::Oct,
];

pub fn equivalence_instance(ct: &CrossTemporalStructure, rng: &mut impl Rng, solver: OctSolver) -> Result<EquivalenceOutcome> {
    let w = positive(rng, ct.n());
    let omega = positive(rng, ct.q());
    let covs = CovarianceSet::from_parts(
        "w-kron-omega",
        DiagCov::kron(&w, &vec![1.0; ct.q()])?.into(),
        DiagCov::kron(&vec![1.0; ct.n()], &omega)?.into(),
        DiagCov::kron(&w, &omega)?.into(),
    );
    let block = random_block(rng, ct, "0");
    let opts = ReconcileOptions {
        oct_solver: solver,
        ..Default::default()
    };
    let mut outs = Vec::new();
    let mut ite = [0; 2];
    for m in EQUIVALENCE_METHODS {
        let r = Reconciler::new(ct, m, &covs, opts)?.reconcile(&block)?;
        match m {
            Method::Ite(Order::Cst) => ite[0] = r.iterations,
            Method::Ite(Order::Tcs) => ite[1] = r.iterations,
            _ => {}
        }
        outs.push(r.result.into_values());
    }
    let scale = block.frobenius();
    let mut max_gap = 0.0f64;
    for a in 0..outs.len() {
        for b in a + 1..outs.len() {
            max_gap = max_gap.max(linalg::diff_norm2(&outs[a], &outs[b]) / scale);
        }
    }
    Ok(EquivalenceOutcome {
        n: ct.n(),
        m: ct.te().m(),
        max_gap,
        ite_iterations: ite,
    })
}

pub const DELTAS: [f64; 3] = [1e-5, 1e-6, 1e-10];

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceOutcome {
    pub n: usize,
    pub m: usize,
    /// `[order][delta]` relative gap to the optimal projection.
    pub gaps: [[f64; 3]; 2],
    pub iterations: [[usize; 3]; 2],
    pub converged: bool,
    /// Gap between the two orders at the smallest tolerance, relative.
    pub order_gap: f64,
    pub floored: usize,
}

impl ConvergenceOutcome {
    pub fn monotone(&self) -> bool {
        self.gaps.iter().all(|g| g[0] >= g[1] && g[1] >= g[2])
    }
}

pub fn convergence_instance(
    ct: &CrossTemporalStructure,
    residuals: &ResidualSet,
    block: &ForecastBlock,
    max_iter: usize,
) -> Result<ConvergenceOutcome> {
    let covs = CovarianceSet::named(ct, CovName::Wlsv, Some(residuals))?;
    let oct = Reconciler::new(ct, Method::Oct, &covs, ReconcileOptions::default())?.reconcile(block)?;
    let scale = block.frobenius();
    let mut gaps = [[0.0; 3]; 2];
    let mut iterations = [[0; 3]; 2];
    let mut converged = true;
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for (oi, order) in [Order::Cst, Order::Tcs].into_iter().enumerate() {
        for (di, delta) in DELTAS.into_iter().enumerate() {
            let opts = ReconcileOptions {
                iter: IterOptions {
                    delta,
                    max_iter,
                    ..Default::default()
                },
                ..Default::default()
            };
            let r = Reconciler::new(ct, Method::Ite(order), &covs, opts)?.reconcile(block)?;
            converged &= r.converged;
            iterations[oi][di] = r.iterations;
            gaps[oi][di] = r.result.frobenius_gap(&oct.result) / scale;
            if di == DELTAS.len() - 1 {
                finals.push(r.result.into_values());
            }
        }
    }
    Ok(ConvergenceOutcome {
        n: ct.n(),
        m: ct.te().m(),
        gaps,
        iterations,
        converged,
        order_gap: linalg::diff_norm2(&finals[0], &finals[1]) / scale,
        floored: covs.floored.len(),
    })
}

pub fn run_equivalence(cfg: &VerifyConfig, exec: Exec) -> Result<Vec<EquivalenceOutcome>> {
    exec.map_range(cfg.equivalence_instances, |i| {
        let mut rng = instance_rng(cfg.seed, 1, i);
        let ct = random_structure(&mut rng, cfg);
        equivalence_instance(&ct, &mut rng, OctSolver::Auto)
    })
    .into_iter()
    .collect()
}

pub fn run_convergence(cfg: &VerifyConfig, exec: Exec) -> Result<Vec<ConvergenceOutcome>> {
    exec.map_range(cfg.convergence_instances, |i| {
        let mut rng = instance_rng(cfg.seed, 2, i);
        let ct = random_structure(&mut rng, cfg);
        let sim = simulate(
            &ct,
            &SimConfig {
                origins: 1,
                train: cfg.train,
                seed: rng.random(),
                ..Default::default()
            },
            Exec::Sequential,
        )?;
        let residuals = if cfg.adversarial {
            ResidualSet::new(ct.n(), ct.q(), vec![vec![0.0; ct.dim()]; cfg.train])?
        } else {
            sim.residuals
        };
        convergence_instance(&ct, &residuals, &sim.base[0], cfg.max_iter)
    })
    .into_iter()
    .collect()
}

/// Every method on the one-series, one-order structure returns its input.
pub fn degenerate_check() -> Result<Check> {
    let cs = CrossSectionalStructure::new(DMatrix::zeros(0, 1), None)?;
    let te = TemporalStructure::new(&[1])?;
    let ct = CrossTemporalStructure::new(cs, te)?;
    let block = ForecastBlock::for_structure("0", &ct, vec![3.5])?;
    let covs = CovarianceSet::named(&ct, CovName::Str, None)?;
    let mut worst = 0.0f64;
    let mut count = 0;
    for m in Method::ALL.into_iter().filter(|m| *m != Method::PersBu) {
        let r = Reconciler::new(&ct, m, &covs, ReconcileOptions::default())?.reconcile(&block)?;
        worst = worst.max(r.result.frobenius_gap(&block));
        count += 1;
    }
    Ok(Check {
        name: "single-node identity".into(),
        passed: worst == 0.0,
        instances: count,
        max_observed: worst,
        tolerance: 0.0,
        detail: String::new(),
    })
}

pub const EQUIVALENCE_TOL: f64 = 1e-8;
pub const CONVERGENCE_TOL: f64 = 1e-6;

pub fn verify_all(cfg: &VerifyConfig, exec: Exec) -> Result<Vec<Check>> {
    let eq = run_equivalence(cfg, exec)?;
    let eq_gap = eq.iter().map(|o| o.max_gap).fold(0.0, f64::max);
    let one_cycle = eq.iter().all(|o| o.ite_iterations == [1, 1]);
    let mut checks = vec![Check {
        name: "equivalence under W ⊗ Ω".into(),
        passed: eq_gap <= EQUIVALENCE_TOL && one_cycle,
        instances: eq.len(),
        max_observed: eq_gap,
        tolerance: EQUIVALENCE_TOL,
        detail: format!("iterative single cycle: {one_cycle}"),
    }];

    let cv = run_convergence(cfg, exec)?;
    let final_gap = cv.iter().flat_map(|o| o.gaps.iter().map(|g| g[2])).fold(0.0, f64::max);
    let order_gap = cv.iter().map(|o| o.order_gap).fold(0.0, f64::max);
    let monotone = cv.iter().all(ConvergenceOutcome::monotone);
    let converged = cv.iter().all(|o| o.converged);
    let floored: usize = cv.iter().map(|o| o.floored).sum();
    let max_iters = cv.iter().flat_map(|o| o.iterations.iter().flatten().copied()).max().unwrap_or(0);
    let mut detail = format!(
        "monotone in delta: {monotone}, all terminated: {converged}, order gap {order_gap:.3e}, max iterations {max_iters}"
    );
    if floored > 0 {
        detail.push_str(&format!(", wlsv floor applied to {floored} cells"));
    }
    checks.push(Check {
        name: "convergence under wlsv".into(),
        passed: final_gap <= CONVERGENCE_TOL && order_gap <= CONVERGENCE_TOL && monotone && converged,
        instances: cv.len(),
        max_observed: final_gap,
        tolerance: CONVERGENCE_TOL,
        detail,
    });
    checks.push(degenerate_check()?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_structures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let cs = random_hierarchy(&mut rng, 30, 8);
            assert!(cs.n() <= 30 && cs.n_upper() <= 8);
            let te = random_temporal(&mut rng, 12);
            assert_eq!(te.orders().first(), Some(&12));
            assert_eq!(te.orders().last(), Some(&1));
        }
    }

    #[test]
    fn degenerate_structure_is_identity() {
        assert!(degenerate_check().unwrap().passed);
    }

    #[test]
    fn small_suites_pass() {
        let cfg = VerifyConfig {
            equivalence_instances: 3,
            convergence_instances: 2,
            max_n: 8,
            max_upper: 3,
            ..Default::default()
        };
        let checks = verify_all(&cfg, Exec::Parallel).unwrap();
        for c in &checks {
            assert!(c.passed, "{}", c.line());
        }
    }
}
