use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctrecon::covariance::CovName;
use ctrecon::evaluate::{self, EvalFrame, PerfSample};
use ctrecon::hierarchy::{load_hierarchy, spec_file::format_hierarchy, spec_file::parse_orders};
use ctrecon::projection::OctSolver;
use ctrecon::reconcile::{baseline_pers_bu, reconcile_batch, sntz, Coherence};
use ctrecon::simulate::{simulate, SimConfig};
use ctrecon::verify::{verify_all, VerifyConfig};
use ctrecon::{
    io, CovarianceSet, CrossSectionalStructure, CrossTemporalStructure, Error, Exec, ForecastBlock, IterOptions,
    Method, ReconcileOptions, ReconcileReport, Reconciler, StopRule, TemporalStructure,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_NON_CONVERGED: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T = u8> = Result<T, Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error: e.into(),
    }
}

/// Numerical kernel failures exit 3, everything else is bad input.
fn classify(e: Error) -> Failure {
    let code = if e.is_numerical() || matches!(e, Error::NonFinite(_)) {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    };
    Failure { code, error: e.into() }
}

trait OrInvalid<T> {
    fn invalid(self) -> CmdResult<T>;
    fn invalid_ctx(self, ctx: impl FnOnce() -> String) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrInvalid<T> for Result<T, E> {
    fn invalid(self) -> CmdResult<T> {
        self.map_err(invalid)
    }

    fn invalid_ctx(self, ctx: impl FnOnce() -> String) -> CmdResult<T> {
        self.map_err(|e| invalid(e.into().context(ctx())))
    }
}

#[derive(Parser, Debug)]
#[command(name = "ctrecon", version, about = "Cross-temporal forecast reconciliation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reconcile base forecasts
    Reconcile(ReconcileArgs),
    /// Generate a synthetic experiment
    Simulate(SimulateArgs),
    /// Accuracy tables, MCB ranks, gap traces and timing summaries
    Evaluate(EvaluateArgs),
    /// Randomized equivalence and convergence checks
    Verify(VerifyArgs),
    /// Time methods on a synthetic instance
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Total over two series, orders 2,1
    Toy,
    /// 324 series (1 total, 5 zones, 318 plants), hourly orders 24..1
    Pv324,
}

#[derive(Args, Debug, Clone)]
pub struct StructureArgs {
    /// Hierarchy description file
    #[arg(long, conflicts_with = "preset")]
    pub hierarchy: Option<PathBuf>,
    /// Built-in structure instead of a file
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Temporal aggregation orders, e.g. 24,12,8,6,4,3,2,1 (overrides the file)
    #[arg(long)]
    pub orders: Option<String>,
}

impl StructureArgs {
    fn load(&self, default: Option<Preset>) -> CmdResult<CrossTemporalStructure> {
        let (cs, file_orders): (CrossSectionalStructure, Option<Vec<usize>>) =
            match (&self.hierarchy, self.preset.or(if self.hierarchy.is_none() { default } else { None })) {
                (Some(p), _) => {
                    let spec = load_hierarchy(p).invalid_ctx(|| format!("reading {}", p.display()))?;
                    (spec.cs, spec.orders)
                }
                (None, Some(Preset::Toy)) => (CrossSectionalStructure::star(2).invalid()?, Some(vec![2, 1])),
                (None, Some(Preset::Pv324)) => (
                    CrossSectionalStructure::pv324(),
                    Some(vec![24, 12, 8, 6, 4, 3, 2, 1]),
                ),
                (None, None) => return Err(invalid(anyhow!("one of --hierarchy or --preset is required"))),
            };
        let orders = match (&self.orders, file_orders) {
            (Some(s), _) => parse_orders(s).map_err(|e| invalid(anyhow!("--orders: {e}")))?,
            (None, Some(o)) => o,
            (None, None) => return Err(invalid(anyhow!("temporal orders missing: pass --orders"))),
        };
        let te = TemporalStructure::new(&orders).invalid()?;
        CrossTemporalStructure::new(cs, te).invalid()
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_cov(s: &str) -> Result<CovName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StopArg {
    LookAhead,
    CycleChange,
    Incoherence,
}

impl From<StopArg> for StopRule {
    fn from(s: StopArg) -> Self {
        match s {
            StopArg::LookAhead => StopRule::LookAhead,
            StopArg::CycleChange => StopRule::CycleChange,
            StopArg::Incoherence => StopRule::Incoherence,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Auto,
    Separable,
    Schur,
    Dense,
}

impl From<SolverArg> for OctSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => OctSolver::Auto,
            SolverArg::Separable => OctSolver::Separable,
            SolverArg::Schur => OctSolver::Schur,
            SolverArg::Dense => OctSolver::Dense,
        }
    }
}

#[derive(Args, Debug)]
pub struct ReconcileArgs {
    #[command(flatten)]
    pub structure: StructureArgs,
    /// Base forecasts: a CSV file or a directory of per-origin CSV files
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// cs, te, oct, seq-cst, seq-tcs, ka-cst, ka-tcs, ite-cst, ite-tcs, bu, pers-bu
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// ols, str, str-cs, str-te, wlsv
    #[arg(long, value_parser = parse_cov, default_value = "ols")]
    pub cov: CovName,
    /// In-sample residuals (required by wlsv)
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Highest-frequency bottom history (required by pers-bu)
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Iterative tolerance
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "look-ahead")]
    pub stop: StopArg,
    /// Set negative highest-frequency bottom values to zero, rebuild bottom-up
    #[arg(long)]
    pub sntz: bool,
    #[arg(long, value_enum, default_value = "auto")]
    pub solver: SolverArg,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Include per-origin elapsed seconds in the reports
    #[arg(long)]
    pub timings: bool,
    /// Write the method's dense operator matrix as CSV
    #[arg(long)]
    pub dump_projector: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub structure: StructureArgs,
    /// Evaluation origins
    #[arg(long, default_value_t = 14)]
    pub reps: usize,
    /// In-sample residual periods
    #[arg(long, default_value_t = 20)]
    pub train: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub heterogeneity: f64,
    #[arg(long, default_value_t = 0.05)]
    pub truth_noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub structure: StructureArgs,
    #[arg(long)]
    pub actuals: PathBuf,
    /// NAME=PATH, repeatable
    #[arg(long = "candidate", required = true)]
    pub candidates: Vec<String>,
    /// Candidate whose nRMSE the others are flagged against
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Report streams (written with --timings) for the timing summary
    #[arg(long = "reports")]
    pub reports: Vec<PathBuf>,
    /// Base forecasts for the iterative gap traces (first origin is used)
    #[arg(long)]
    pub trace_input: Option<PathBuf>,
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[arg(long, value_parser = parse_cov, default_value = "wlsv")]
    pub cov: CovName,
    #[arg(long, default_value = "1e-5,1e-6,1e-10")]
    pub deltas: String,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Instances per suite (default 50 and 20)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Zero residuals: every variance falls to the floor
    #[arg(long)]
    pub adversarial: bool,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Write the checks as JSON lines
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub structure: StructureArgs,
    /// Comma-separated methods
    #[arg(long, default_value = "ite-tcs,ite-cst,oct,ka-tcs,ka-cst")]
    pub method: String,
    /// Comma-separated covariances
    #[arg(long, default_value = "ols,wlsv")]
    pub cov: String,
    /// Replications per (method, covariance)
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for perf.csv and bench.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CmdResult {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(invalid(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| invalid(anyhow!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Reconcile(a) => cmd_reconcile(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn create_dir(p: &Path) -> CmdResult<()> {
    fs::create_dir_all(p).invalid_ctx(|| format!("creating {}", p.display()))
}

fn read_residuals(path: Option<&PathBuf>, ct: &CrossTemporalStructure, cov: CovName) -> CmdResult<Option<ctrecon::ResidualSet>> {
    match path {
        Some(p) => Ok(Some(
            io::read_residuals(p, ct).invalid_ctx(|| format!("reading residuals {}", p.display()))?,
        )),
        None if cov.needs_residuals() => Err(invalid(anyhow!("--cov {cov} requires --residuals"))),
        None => Ok(None),
    }
}

fn write_matrix_csv(path: &Path, m: &nalgebra::DMatrix<f64>) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()
}

fn pers_bu_reports(
    ct: &CrossTemporalStructure,
    origins: Vec<String>,
    history: &BTreeMap<String, Vec<Vec<f64>>>,
    use_sntz: bool,
) -> CmdResult<Vec<ReconcileReport>> {
    origins
        .into_iter()
        .map(|id| {
            let start = Instant::now();
            let h = history
                .get(&id)
                .ok_or_else(|| invalid(anyhow!("no history for origin {id}")))?;
            let block = baseline_pers_bu(ct, id.clone(), h).map_err(classify)?;
            let (cs, te) = ct.coherence_residuals(block.vectorize());
            let mut r = ReconcileReport {
                origin_id: id,
                method: Method::PersBu.to_string(),
                covariance: "none".into(),
                solver: None,
                iterations: 1,
                converged: true,
                trace: vec![],
                coherence: Coherence { cs, te },
                cross_gap: None,
                flags: vec![],
                elapsed: 0.0,
                peak_mem: 2 * ct.dim() * 8,
                result: block,
                iterates: vec![],
            };
            if use_sntz {
                r = sntz(ct, r);
            }
            r.elapsed = start.elapsed().as_secs_f64();
            Ok(r)
        })
        .collect()
}

fn cmd_reconcile(a: ReconcileArgs) -> CmdResult {
    let ct = a.structure.load(None)?;
    if a.sntz && !a.method.is_ct_coherent() {
        return Err(invalid(anyhow!(
            "--sntz needs a cross-temporally coherent method, {} is not",
            a.method
        )));
    }
    let iter = IterOptions {
        delta: a.delta,
        max_iter: a.max_iter,
        stop: a.stop.into(),
        keep_iterates: false,
    };
    iter.validate().map_err(classify)?;
    let blocks = match &a.input {
        Some(p) => io::read_blocks(p, &ct).invalid_ctx(|| format!("reading {}", p.display()))?,
        None if a.method == Method::PersBu => Vec::new(),
        None => return Err(invalid(anyhow!("--input is required for {}", a.method))),
    };
    create_dir(&a.out)?;

    let reports = if a.method == Method::PersBu {
        let hp = a
            .history
            .as_ref()
            .ok_or_else(|| invalid(anyhow!("pers-bu requires --history")))?;
        let history = io::read_history(hp, &ct).invalid_ctx(|| format!("reading {}", hp.display()))?;
        let origins: Vec<String> = if blocks.is_empty() {
            let mut ids: Vec<ForecastBlock> = history
                .keys()
                .map(|k| ForecastBlock::new(k.clone(), 1, 1, vec![0.0]).expect("placeholder"))
                .collect();
            ctrecon::reconcile::sort_origin_ids(&mut ids);
            ids.into_iter().map(|b| b.origin_id).collect()
        } else {
            blocks.iter().map(|b| b.origin_id.clone()).collect()
        };
        pers_bu_reports(&ct, origins, &history, a.sntz)?
    } else {
        // bottom-up ignores the covariance
        let cov = if a.method.is_baseline() { CovName::Ols } else { a.cov };
        let residuals = read_residuals(a.residuals.as_ref(), &ct, cov)?;
        let covs = CovarianceSet::named(&ct, cov, residuals.as_ref()).map_err(classify)?;
        let opts = ReconcileOptions {
            iter,
            oct_solver: a.solver.into(),
            sntz: a.sntz,
            cross_gap: true,
        };
        let rec = Reconciler::new(&ct, a.method, &covs, opts).map_err(classify)?;
        if let Some(p) = &a.dump_projector {
            let m = rec.dense_operator().map_err(classify)?;
            write_matrix_csv(p, &m).invalid_ctx(|| format!("writing {}", p.display()))?;
        }
        let results = reconcile_batch(&rec, &blocks, Exec::Parallel);
        let mut reports = Vec::with_capacity(results.len());
        for (r, b) in results.into_iter().zip(&blocks) {
            reports.push(r.map_err(|e| {
                let mut f = classify(e);
                f.error = f.error.context(format!("origin {}", b.origin_id));
                f
            })?);
        }
        reports
    };

    let out_blocks: Vec<ForecastBlock> = reports.iter().map(|r| r.result.clone()).collect();
    let csv_path = a.out.join("reconciled.csv");
    io::write_blocks(&csv_path, &ct, &out_blocks).invalid_ctx(|| format!("writing {}", csv_path.display()))?;
    let rep_path = a.out.join("reports.jsonl");
    io::write_reports(&rep_path, &reports, a.timings).invalid_ctx(|| format!("writing {}", rep_path.display()))?;

    let stalled: Vec<&str> = reports
        .iter()
        .filter(|r| !r.converged)
        .map(|r| r.origin_id.as_str())
        .collect();
    log::info!("{} origins reconciled with {}", reports.len(), a.method);
    if !stalled.is_empty() {
        eprintln!(
            "warning: {} of {} origins did not converge within {} cycles (origins {})",
            stalled.len(),
            reports.len(),
            a.max_iter,
            stalled.join(", ")
        );
        return Ok(EXIT_NON_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let ct = a.structure.load(None)?;
    let cfg = SimConfig {
        origins: a.reps,
        train: a.train,
        noise_sd: a.noise,
        heterogeneity: a.heterogeneity,
        truth_sd: a.truth_noise,
        seed: a.seed,
    };
    let data = simulate(&ct, &cfg, Exec::Parallel).map_err(classify)?;
    create_dir(&a.out)?;
    let w = |name: &str, blocks: &[ForecastBlock]| -> CmdResult<()> {
        let p = a.out.join(name);
        io::write_blocks(&p, &ct, blocks).invalid_ctx(|| format!("writing {}", p.display()))
    };
    w("actuals.csv", &data.actuals)?;
    w("base.csv", &data.base)?;
    let rp = a.out.join("residuals.csv");
    io::write_residuals(&rp, &ct, &data.residuals).invalid_ctx(|| format!("writing {}", rp.display()))?;
    let hp = a.out.join("history.csv");
    fs::write(&hp, io::format_history(&ct, &data.history)).invalid_ctx(|| format!("writing {}", hp.display()))?;
    let sp = a.out.join("hierarchy.txt");
    fs::write(&sp, format_hierarchy(ct.cs(), Some(ct.te().orders()))).invalid_ctx(|| format!("writing {}", sp.display()))?;
    log::info!("simulated {} origins, {} residual periods", a.reps, a.train);
    Ok(EXIT_OK)
}

fn perf_from_reports(path: &Path) -> CmdResult<Vec<PerfSample>> {
    let text = fs::read_to_string(path).invalid_ctx(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value =
            serde_json::from_str(line).invalid_ctx(|| format!("{}: line {}", path.display(), i + 1))?;
        let field = |k: &str| {
            v.get(k)
                .ok_or_else(|| invalid(anyhow!("{}: line {}: missing field {k}", path.display(), i + 1)))
        };
        let elapsed = field("elapsed")
            .map_err(|f| invalid(f.error.context("reports need timings; rerun reconcile with --timings")))?
            .as_f64()
            .unwrap_or(f64::NAN);
        out.push((
            field("method")?.as_str().unwrap_or_default().to_string(),
            elapsed,
            field("peak_mem")?.as_u64().unwrap_or(0) as usize,
            field("iterations")?.as_u64().unwrap_or(0) as usize,
        ));
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let ct = a.structure.load(None)?;
    let actuals = io::read_blocks(&a.actuals, &ct).invalid_ctx(|| format!("reading {}", a.actuals.display()))?;
    let mut frame = EvalFrame::new(ct.cs(), ct.te(), actuals).map_err(classify)?;
    for c in &a.candidates {
        let (name, path) = c
            .split_once('=')
            .ok_or_else(|| invalid(anyhow!("--candidate expects NAME=PATH, got {c:?}")))?;
        let blocks = io::read_blocks(Path::new(path), &ct).invalid_ctx(|| format!("reading {path}"))?;
        frame.add_candidate(name, blocks).map_err(classify)?;
    }
    create_dir(&a.out)?;

    let table = evaluate::nrmse_table(&frame, a.baseline.as_deref(), Exec::Parallel).map_err(classify)?;
    evaluate::write_nrmse_csv(&a.out.join("nrmse.csv"), &table).invalid()?;

    if frame.candidate_names().len() >= 2 {
        let mut levels: Vec<usize> = frame.levels().to_vec();
        levels.sort_unstable();
        levels.dedup();
        let mut selections: Vec<(String, Vec<usize>)> = vec![("all".into(), (0..ct.n()).collect())];
        for l in levels {
            selections.push((
                format!("L{l}"),
                (0..ct.n()).filter(|&i| frame.levels()[i] == l).collect(),
            ));
        }
        let mut ranks = Vec::new();
        for (name, sel) in &selections {
            for &k in ct.te().orders() {
                match evaluate::mcb_nemenyi(&frame, k, sel, a.alpha) {
                    Ok(r) => ranks.push((name.clone(), k, r)),
                    Err(Error::Invalid(msg)) => log::warn!("ranks for {name}, k={k} skipped: {msg}"),
                    Err(e) => return Err(classify(e)),
                }
            }
        }
        evaluate::write_ranks_csv(&a.out.join("ranks.csv"), &ranks).invalid()?;
    } else {
        log::warn!("MCB ranks need at least two candidates; ranks.csv not written");
    }

    if !a.reports.is_empty() {
        let mut samples = Vec::new();
        for p in &a.reports {
            samples.extend(perf_from_reports(p)?);
        }
        evaluate::write_perf_csv(&a.out.join("perf.csv"), &evaluate::perf_summary(&samples)).invalid()?;
    }

    if let Some(tp) = &a.trace_input {
        let blocks = io::read_blocks(tp, &ct).invalid_ctx(|| format!("reading {}", tp.display()))?;
        let block = blocks.first().ok_or_else(|| invalid(anyhow!("{} holds no origin", tp.display())))?;
        let residuals = read_residuals(a.residuals.as_ref(), &ct, a.cov)?;
        let covs = CovarianceSet::named(&ct, a.cov, residuals.as_ref()).map_err(classify)?;
        let oct = Reconciler::new(&ct, Method::Oct, &covs, ReconcileOptions::default())
            .and_then(|r| r.reconcile(block))
            .map_err(classify)?;
        let deltas: Vec<f64> = a
            .deltas
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .invalid_ctx(|| format!("--deltas {:?}", a.deltas))?;
        let mut rows = Vec::new();
        for method in [Method::Ite(ctrecon::Order::Tcs), Method::Ite(ctrecon::Order::Cst)] {
            for &delta in &deltas {
                let opts = ReconcileOptions {
                    iter: IterOptions {
                        delta,
                        max_iter: a.max_iter,
                        keep_iterates: true,
                        ..Default::default()
                    },
                    ..Default::default()
                };
                let r = Reconciler::new(&ct, method, &covs, opts)
                    .and_then(|rec| rec.reconcile(block))
                    .map_err(classify)?;
                let gaps = evaluate::frobenius_trace(&r, &oct).map_err(classify)?;
                rows.extend(evaluate::trace_rows(&method.to_string(), delta, &gaps));
            }
        }
        evaluate::write_trace_csv(&a.out.join("trace.csv"), &rows).invalid()?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let mut cfg = VerifyConfig {
        seed: a.seed,
        adversarial: a.adversarial,
        max_iter: a.max_iter,
        ..Default::default()
    };
    if let Some(r) = a.reps {
        if r == 0 {
            return Err(invalid(anyhow!("--reps must be at least 1")));
        }
        cfg.equivalence_instances = r;
        cfg.convergence_instances = r;
    }
    let checks = verify_all(&cfg, Exec::Parallel).map_err(classify)?;
    for c in &checks {
        println!("{}", c.line());
    }
    if let Some(p) = &a.out {
        let mut text = String::new();
        for c in &checks {
            text.push_str(&serde_json::to_string(c).invalid()?);
            text.push('\n');
        }
        fs::write(p, text).invalid_ctx(|| format!("writing {}", p.display()))?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NUMERICAL)
    }
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let ct = a.structure.load(Some(Preset::Pv324))?;
    let methods: Vec<Method> = a
        .method
        .split(',')
        .map(|s| s.parse::<Method>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(anyhow!(e)))?;
    if let Some(m) = methods.iter().find(|m| **m == Method::PersBu) {
        return Err(invalid(anyhow!("{m} cannot be benchmarked")));
    }
    let covs: Vec<CovName> = a
        .cov
        .split(',')
        .map(parse_cov)
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(anyhow!(e)))?;
    if a.reps == 0 {
        return Err(invalid(anyhow!("--reps must be at least 1")));
    }
    let iter = IterOptions {
        delta: a.delta,
        max_iter: a.max_iter,
        ..Default::default()
    };
    iter.validate().map_err(classify)?;

    let mut samples: Vec<PerfSample> = Vec::new();
    let mut reports = Vec::new();
    for rep in 0..a.reps {
        let sim = simulate(
            &ct,
            &SimConfig {
                origins: 1,
                seed: a.seed.wrapping_add(rep as u64),
                ..Default::default()
            },
            Exec::Parallel,
        )
        .map_err(classify)?;
        for &cov in &covs {
            let set = CovarianceSet::named(&ct, cov, Some(&sim.residuals)).map_err(classify)?;
            for &m in &methods {
                let opts = ReconcileOptions {
                    iter,
                    ..Default::default()
                };
                let start = Instant::now();
                let rec = Reconciler::new(&ct, m, &set, opts).map_err(classify)?;
                let mut r = rec.reconcile(&sim.base[0]).map_err(classify)?;
                r.elapsed = start.elapsed().as_secs_f64();
                r.origin_id = rep.to_string();
                let label = format!("{m}/{cov}");
                samples.push((label, r.elapsed, r.peak_mem, r.iterations));
                reports.push(r);
            }
        }
    }
    let rows = evaluate::perf_summary(&samples);
    println!(
        "{:<16} {:>5} {:>14} {:>14} {:>14} {:>10}",
        "method/cov", "runs", "median s", "iqr s", "median bytes", "median J"
    );
    for r in &rows {
        println!(
            "{:<16} {:>5} {:>14.6} {:>14.6} {:>14.0} {:>10}",
            r.method, r.runs, r.median_elapsed, r.iqr_elapsed, r.median_mem, r.median_iterations
        );
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        evaluate::write_perf_csv(&out.join("perf.csv"), &rows).invalid()?;
        io::write_reports(&out.join("bench.jsonl"), &reports, true).invalid()?;
    }
    Ok(EXIT_OK)
}
