use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TOY: &str = "origin,series,k2_1,k1_1,k1_2
1,U1,6,3,3
1,B1,2,1,1
1,B2,2,1,1
";

fn values(csv: &str, series: &str) -> Vec<f64> {
    let line = csv.lines().find(|l| l.split(',').nth(1) == Some(series)).unwrap();
    line.split(',').skip(2).map(|v| v.parse().unwrap()).collect()
}

#[test]
fn toy_oct_matches_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("base.csv");
    fs::write(&input, TOY).unwrap();
    let out = dir.path().join("out");
    let o = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&input), "--method", "oct", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("reconciled.csv")).unwrap();
    let want = [("U1", [16.0 / 3.0, 8.0 / 3.0, 8.0 / 3.0]), ("B1", [8.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0])];
    for (series, w) in want {
        let got = values(&csv, series);
        assert!(got.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-12), "{series}: {got:?}");
    }
    let report = fs::read_to_string(out.join("reports.jsonl")).unwrap();
    assert!(report.contains("\"method\":\"oct\""));
    assert!(!report.contains("elapsed"));
}

#[test]
fn ols_iteration_stops_after_one_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("base.csv");
    fs::write(&input, TOY).unwrap();
    for method in ["ite-cst", "ite-tcs"] {
        let out = dir.path().join(method);
        let o = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&input), "--method", method, "--cov", "ols", "--out", s(&out)]);
        assert_eq!(code(&o), 0);
        let report = fs::read_to_string(out.join("reports.jsonl")).unwrap();
        assert!(report.contains("\"iterations\":1,"), "{report}");
    }
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("base.csv");
    fs::write(&input, TOY).unwrap();
    let out = dir.path().join("out");
    let sntz_cs = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&input), "--method", "cs", "--sntz", "--out", s(&out)]);
    assert_eq!(code(&sntz_cs), 2);
    let missing = ctrecon(&["reconcile", "--preset", "toy", "--input", "/nonexistent.csv", "--method", "oct", "--out", s(&out)]);
    assert_eq!(code(&missing), 2);
    fs::write(dir.path().join("bad.csv"), "origin,series,k2_1,k1_1\n1,U1,1,2\n").unwrap();
    let bad = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&dir.path().join("bad.csv")), "--method", "oct", "--out", s(&out)]);
    assert_eq!(code(&bad), 2);
    let wlsv = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&input), "--method", "oct", "--cov", "wlsv", "--out", s(&out)]);
    assert_eq!(code(&wlsv), 2);
    let threads = ctrecon(&["--threads", "0", "verify", "--reps", "1"]);
    assert_eq!(code(&threads), 2);
    fs::write(dir.path().join("h.txt"), "[cross-sectional]\nT: A, B\n[temporal]\norders = 4,3,1\n").unwrap();
    let h = ctrecon(&["reconcile", "--hierarchy", s(&dir.path().join("h.txt")), "--input", s(&input), "--method", "oct", "--out", s(&out)]);
    assert_eq!(code(&h), 2);
}

#[test]
fn non_convergence_exits_4_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(code(&ctrecon(&["simulate", "--preset", "toy", "--reps", "2", "--out", s(&sim)])), 0);
    let out = dir.path().join("out");
    let o = ctrecon(&[
        "reconcile", "--preset", "toy", "--input", s(&sim.join("base.csv")), "--residuals", s(&sim.join("residuals.csv")),
        "--method", "ite-tcs", "--cov", "wlsv", "--delta", "1e-14", "--max-iter", "1", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("reconciled.csv").exists());
    let report = fs::read_to_string(out.join("reports.jsonl")).unwrap();
    assert!(report.contains("non-converged:max_iter=1"));
}

fn pipeline(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let sim = dir.join("sim");
    let t = ["--threads", threads];
    let run = |args: &[&str]| {
        let all: Vec<&str> = t.iter().copied().chain(args.iter().copied()).collect();
        let o = ctrecon(&all);
        assert!(matches!(code(&o), 0 | 4), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["simulate", "--hierarchy", s(&dir.join("h.txt")), "--reps", "4", "--seed", "7", "--out", s(&sim)]);
    let h = dir.join("sim/hierarchy.txt");
    let base = sim.join("base.csv");
    let res = sim.join("residuals.csv");
    for m in ["oct", "ite-tcs", "ka-cst", "seq-cst"] {
        run(&["reconcile", "--hierarchy", s(&h), "--input", s(&base), "--residuals", s(&res), "--method", m, "--cov", "wlsv", "--out", s(&dir.join(m))]);
    }
    run(&[
        "evaluate", "--hierarchy", s(&h), "--actuals", s(&sim.join("actuals.csv")),
        "--candidate", &format!("base={}", s(&base)),
        "--candidate", &format!("oct={}", s(&dir.join("oct/reconciled.csv"))),
        "--candidate", &format!("ite={}", s(&dir.join("ite-tcs/reconciled.csv"))),
        "--baseline", "base", "--trace-input", s(&base), "--residuals", s(&res), "--out", s(&dir.join("eval")),
    ]);
    let mut files = Vec::new();
    for sub in ["sim", "oct", "ite-tcs", "ka-cst", "seq-cst", "eval"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            files.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    files
}

#[test]
fn outputs_identical_across_runs_and_thread_counts() {
    let spec = "# two zones\n[cross-sectional]\nTotal: P1, P2, P3, P4, P5\nZ1: P1, P2, P3\nZ2: P4, P5\n[temporal]\norders = 12,6,4,3,2,1\n";
    let runs: Vec<_> = ["1", "8", "1"]
        .iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            fs::write(dir.path().join("h.txt"), spec).unwrap();
            pipeline(dir.path(), t)
        })
        .collect();
    assert!(runs[0].iter().any(|(n, _)| n == "eval/trace.csv"));
    assert!(runs[0].iter().any(|(n, _)| n == "eval/ranks.csv"));
    for other in &runs[1..] {
        assert_eq!(runs[0].len(), other.len());
        for ((na, a), (nb, b)) in runs[0].iter().zip(other) {
            assert_eq!(na, nb);
            assert!(a == b, "{na} differs");
        }
    }
}

#[test]
fn pers_bu_and_sntz() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("hist.csv"), "origin,series,h1,h2\n1,B1,1,2\n1,B2,3,4\n").unwrap();
    let out = dir.path().join("out");
    let o = ctrecon(&["reconcile", "--preset", "toy", "--method", "pers-bu", "--history", s(&dir.path().join("hist.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("reconciled.csv")).unwrap();
    assert_eq!(values(&csv, "U1"), vec![10.0, 4.0, 6.0]);

    let neg = "origin,series,k2_1,k1_1,k1_2\n1,U1,1,0,1\n1,B1,-4,-3,-1\n1,B2,5,3,2\n";
    fs::write(dir.path().join("neg.csv"), neg).unwrap();
    let o = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&dir.path().join("neg.csv")), "--method", "oct", "--sntz", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("reconciled.csv")).unwrap();
    let b1 = values(&csv, "B1");
    assert!(b1[1] >= 0.0 && b1[2] >= 0.0);
    let u = values(&csv, "U1");
    let b2 = values(&csv, "B2");
    for t in 0..3 {
        assert!((u[t] - b1[t] - b2[t]).abs() < 1e-10);
    }
    assert!((u[0] - u[1] - u[2]).abs() < 1e-10);
}

#[test]
fn projector_dump_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("base.csv");
    fs::write(&input, TOY).unwrap();
    let dump = dir.path().join("p.csv");
    let o = ctrecon(&["reconcile", "--preset", "toy", "--input", s(&input), "--method", "cs", "--dump-projector", s(&dump), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 0);
    let rows: Vec<Vec<f64>> = fs::read_to_string(&dump)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    // total row of the first column under ols: (2/3, 1/3, 1/3) at positions 0, 3, 6
    assert!((rows[0][0] - 2.0 / 3.0).abs() < 1e-12 && (rows[0][3] - 1.0 / 3.0).abs() < 1e-12);

    let v = ctrecon(&["verify", "--reps", "3"]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
    let text = String::from_utf8_lossy(&v.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn bench_runs_on_small_structure() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctrecon(&[
        "bench", "--preset", "toy", "--method", "ite-tcs,oct", "--cov", "ols,wlsv", "--reps", "2", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let perf = fs::read_to_string(dir.path().join("perf.csv")).unwrap();
    assert_eq!(perf.lines().count(), 5);
}
