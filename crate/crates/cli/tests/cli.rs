use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use varinc::multifun::{Arc, Interp};
use varinc_cli::output::{read_arc_csv, write_arc_csv, MultiplierDump};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn varinc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varinc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    let d = dir.to_str().unwrap();
    full.extend(["--out", d]);
    varinc(&full)
}

#[test]
fn step_staircase_has_one_unit_jump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("step.json");
    let o = run_in(dir.path(), &["variation", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("staircase_d0_e1.csv"));
    let eta: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let jumps: Vec<(usize, f64)> =
        eta.windows(2).enumerate().map(|(i, w)| (i, w[1] - w[0])).filter(|(_, d)| *d != 0.0).collect();
    assert_eq!(jumps.len(), 1);
    assert_eq!(jumps[0].1, 1.0);
    assert_eq!(rows[jumps[0].0 + 1][0], "0.5");
    assert_eq!(rows[0].len(), 5);
}

#[test]
fn sinusoid_total_matches_dense_oracle() {
    let n = 1 << 16;
    let f = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
    let oracle: f64 = (0..n).map(|i| (f((i + 1) as f64 / n as f64) - f(i as f64 / n as f64)).abs()).sum();
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("sinusoid.json");
    let o = run_in(dir.path(), &["variation", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&dir.path().join("variation_summary.json"));
    for e in s["staircases"].as_array().unwrap() {
        let total = e["total"].as_f64().unwrap();
        assert!((total - oracle).abs() <= 1e-3, "{total} vs {oracle}");
        assert!((total - 4.0).abs() <= 1e-3);
    }
}

#[test]
fn missing_f_names_the_field() {
    let cfg = fixture("missing_f.json");
    let o = varinc(&["variation", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("missing field `f`"), "{e}");
    assert!(e.contains("line 7"), "{e}");
}

#[test]
fn malformed_json_is_a_parse_error() {
    let cfg = fixture("malformed.json");
    let o = varinc(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("m.json");
    std::fs::write(&bad, "{\"schema\": \"varinc/1\", \"lambda\": 1.0,,}").unwrap();
    let cfg = fixture("linear.json");
    let o = varinc(&["check", "--config", cfg.to_str().unwrap(), "--multipliers", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("parse error"), "{}", stderr(&o));
}

#[test]
fn callback_family_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema": "varinc/1", "problem": {"f": {"family": "callback"}, "cost": {},
            "endpoints": {"initial": "free", "terminal": "free"}}, "variation": {"eps": [0.1]}}"#,
    )
    .unwrap();
    let o = varinc(&["variation", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("callback"));
}

#[test]
fn wrong_schema_and_bad_tolerances_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let text = std::fs::read_to_string(fixture("linear.json")).unwrap().replace("varinc/1", "varinc/0");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(code(&varinc(&["solve", "--config", cfg.to_str().unwrap()])), 2);

    let lin = fixture("linear.json");
    let lin = lin.to_str().unwrap();
    assert_eq!(code(&varinc(&["solve", "--config", lin, "--tol", "kkt=-1"])), 2);
    assert_eq!(code(&varinc(&["solve", "--config", lin, "--tol", "nosuch=1"])), 2);
    assert_eq!(code(&varinc(&["solve", "--config", lin, "--tol", "kkt"])), 2);
    assert_eq!(code(&varinc(&["frobnicate"])), 2);
}

#[test]
fn empty_schedule_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let text = std::fs::read_to_string(fixture("linear.json"))
        .unwrap()
        .replace("\"cells\": [16, 32], \"weights\": [16.0, 32.0]", "\"cells\": [], \"weights\": []");
    std::fs::write(&cfg, text).unwrap();
    let o = run_in(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schedule"), "{}", stderr(&o));
}

#[test]
fn coupling_is_enforced_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    // reference t is not admissible for the constraint x <= 1/2, so alpha > 0
    let text = std::fs::read_to_string(fixture("boundary_start.json"))
        .unwrap()
        .replace("\"c\": [-1.0], \"b\": 0.0", "\"c\": [1.0], \"b\": -0.5")
        .replace("{\"kind\": \"poly\", \"coeffs\": [0.0, 1.0]}", "{\"kind\": \"poly\", \"coeffs\": [0.0, 0.0, 1.0]}")
        .replace("\"weights\": [320.0]", "\"weights\": [320.0], \"beta\": [1e-9]");
    std::fs::write(&cfg, text).unwrap();
    let o = run_in(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("coupling"), "{}", stderr(&o));
}

#[test]
fn linear_problem_gives_bang_arc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("linear.json");
    let o = run_in(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..2 {
        let x = read_arc_csv(&dir.path().join(format!("arc_{i}.csv"))).unwrap();
        for (t, v) in x.grid.iter().zip(&x.values) {
            assert!((v[0] - t).abs() <= 1e-9, "x({t}) = {}", v[0]);
        }
        let tr = read_csv(&dir.path().join(format!("trace_{i}.csv")));
        assert_eq!(tr[0].len(), 5);
        let r0: f64 = tr[0][1].parse().unwrap();
        assert!(tr.iter().all(|row| (row[1].parse::<f64>().unwrap() - r0).abs() <= 1e-9));
    }
    let s = json(&dir.path().join("solve_summary.json"));
    assert_eq!(s.as_array().unwrap().len(), 2);
}

#[test]
fn constrained_measure_sits_on_active_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("constrained.json");
    let o = run_in(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(&dir.path().join("solve_summary.json"));
    for (i, st) in summary.as_array().unwrap().iter().enumerate() {
        let beta = st["beta"].as_f64().unwrap();
        let m = MultiplierDump::load(&dir.path().join(format!("multipliers_{i}.json"))).unwrap();
        assert!(!m.mu_atoms.is_empty());
        for a in m.mu_atoms.iter().filter(|a| a.mass > 0.0) {
            let k = m.t.iter().position(|&t| t == a.t).expect("atom on a knot");
            // penalty active or at its kink: h(x) - beta >= 0 up to the kink band
            assert!(m.x[k][0] - 0.5 - beta >= -1e-8, "atom at {} with x = {}", a.t, m.x[k][0]);
        }
        let density_cells: Vec<usize> =
            m.mu_density.iter().enumerate().filter(|(_, d)| **d > 0.0).map(|(k, _)| k).collect();
        assert!(density_cells.iter().all(|&k| m.t[k] >= 0.5));
    }
}

#[test]
fn pipeline_multipliers_pass_check() {
    for name in ["boundary_start.json", "constrained.json", "linear.json"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture(name);
        let cfg = cfg.to_str().unwrap();
        let o = run_in(dir.path(), &["solve", "--config", cfg]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        let m = dir.path().join("multipliers_0.json");
        let rep = dir.path().join("report");
        let o = varinc(&["check", "--config", cfg, "--multipliers", m.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        let r = json(&rep.join("check_report.json"));
        assert_eq!(r["pass"], true);
        assert_eq!(r["tolerance_preset"], "solver");
    }
}

#[test]
fn trivial_multiplier_fails_nondegeneracy() {
    let cfg = fixture("boundary_start.json");
    let m = fixture("boundary_start_trivial.json");
    let o = varinc(&["check", "--config", cfg.to_str().unwrap(), "--multipliers", m.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nondegeneracy fails"), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["tolerance_preset"], "analytic");
    assert_eq!(r["conditions"]["verdicts"]["nontriviality"], true);
    assert_eq!(r["conditions"]["verdicts"]["adjoint"], true);
    assert_eq!(r["conditions"]["verdicts"]["weierstrass"], true);
    assert_eq!(r["nondegeneracy"]["value"], 0.0);
    assert_eq!(r["inward_nondegeneracy"], false);
}

#[test]
fn certificate_has_the_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("step_potential.json");
    let o = run_in(dir.path(), &["certify-lipschitz", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(&dir.path().join("certificate.json"));
    let keys: Vec<&str> = c.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["k1", "k2", "k3", "K", "V_cap", "sup_slope", "verdict"] {
        assert!(keys.contains(&k), "missing {k}");
    }
    assert_eq!(keys.len(), 7);
    assert_eq!(c["verdict"], true);
    assert!(c["sup_slope"].as_f64().unwrap() <= c["V_cap"].as_f64().unwrap() + 1e-12);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cases: [(&str, &str); 3] =
        [("solve", "constrained.json"), ("variation", "sinusoid.json"), ("certify-lipschitz", "step_potential.json")];
    for (cmd, name) in cases {
        let cfg = fixture(name);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(code(&run_in(a.path(), &[cmd, "--config", cfg.to_str().unwrap()])), 0);
        assert_eq!(code(&run_in(b.path(), &[cmd, "--config", cfg.to_str().unwrap()])), 0);
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "{cmd} {name}");
    }
}

#[test]
fn arc_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let x = Arc::sample(0.0, 1.0, 37, Interp::Linear, |t| vec![(3.0 * t).sin() / 7.0, 1e-300 * t, -t / 3.0]);
    write_arc_csv(&path, &x).unwrap();
    let y = read_arc_csv(&path).unwrap();
    assert_eq!(x.grid.len(), y.grid.len());
    for (a, b) in x.grid.iter().zip(&y.grid) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in x.values.iter().flatten().zip(y.values.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn levels_flag_changes_the_staircase_resolution() {
    let cfg = fixture("step.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run_in(a.path(), &["variation", "--config", cfg.to_str().unwrap()])), 0);
    assert_eq!(code(&run_in(b.path(), &["variation", "--config", cfg.to_str().unwrap(), "--levels", "4"])), 0);
    let ra = read_csv(&a.path().join("staircase_d0_e0.csv"));
    let rb = read_csv(&b.path().join("staircase_d0_e0.csv"));
    assert!(rb.len() > ra.len());
}
