use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semiquantum::chaos::classification_from;
use semiquantum_cli::breaks::BreakTime;
use semiquantum_cli::commands::{break_reports, read_scan, write_scan, CellOutcome, ModelSeries, ScanCell};
use semiquantum_cli::config::RunConfig;
use semiquantum_cli::csvio::read_floats;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiquantum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn show_defaults_is_the_default_config() {
    let out = bin(&["config", "show-defaults"]);
    assert!(out.status.success());
    let cfg: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn uncoupled_ground_width_simulation_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"energy": null, "initial_state": {"A": 1.5, "pA": 0.0, "G": 0.5, "Pi_G": 0.0}, "params": {"e": 0.0}}"#,
    );
    let out_dir = dir.path().join("o");
    let out = bin(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--t-max",
        "20",
        "--dt",
        "0.01",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_floats(&out_dir.join("trajectory_hartree.csv")).unwrap();
    assert_eq!(header[0], "t");
    assert_eq!(rows.len(), 201);
    assert!((rows[200][0] - 20.0).abs() < 1e-12);
    let d_col = header.iter().position(|h| h == "D").unwrap();
    for row in &rows {
        for (c, (v, first)) in row.iter().zip(&rows[0]).enumerate().skip(1) {
            if header[c].ends_with('D') {
                continue;
            }
            assert!((v - first).abs() < 1e-10, "column {} drifts: {v} vs {first}", header[c]);
        }
        // The A packet spreads freely.
        let t = row[0];
        let d = 0.5 + t * t / 2.0;
        assert!((row[d_col] - d).abs() < 1e-8 * d, "D({t}) = {}", row[d_col]);
    }
}

#[test]
fn bad_input_exits_with_one() {
    let out = bin(&["simulate", "--model", "quantum"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"energi": 5.0}"#);
    let out = bin(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    // Infeasible energy for the default convention.
    let out = bin(&["simulate", "--energy", "0.1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn escaping_exact_run_exits_with_two_and_keeps_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": "exact", "energy": null,
            "initial_state": {"A": 0.0, "pA": 6.0, "G": 0.5, "Pi_G": 0.0},
            "params": {"e": 0.0},
            "exact": {"grid": {"n_a": 64, "n_x": 32, "l_a": 8.0, "l_x": 6.0}}}"#,
    );
    let out_dir = dir.path().join("o");
    let out = bin(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--t-max",
        "5",
        "--dt",
        "0.005",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_floats(&out_dir.join("observables_exact.csv")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.last().unwrap()[0] < 5.0);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("run_simulate.json")).unwrap()).unwrap();
    assert_eq!(meta["partial"], serde_json::Value::Bool(true));
}

#[test]
fn poincare_family_depends_on_seed_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, workers: &str, name: &str| {
        let o = dir.path().join(name);
        let out = bin(&[
            "poincare",
            "--t-max",
            "30",
            "--n-traj",
            "6",
            "--seed",
            seed,
            "--workers",
            workers,
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        fs::read(o.join("poincare_hartree_A_pA.csv")).unwrap()
    };
    let a = run("7", "1", "a");
    assert_eq!(a, run("7", "4", "b"));
    assert_ne!(a, run("8", "1", "c"));
}

#[test]
fn scan_csv_round_trips() {
    let cells = vec![
        ScanCell {
            e: 0.3,
            energy: 0.5,
            outcome: CellOutcome::Infeasible,
        },
        ScanCell {
            e: 0.3,
            energy: 1.0,
            outcome: CellOutcome::Classified(classification_from(vec![0.01, 0.002], 0.05)),
        },
        ScanCell {
            e: 1.0,
            energy: 5.0,
            outcome: CellOutcome::Classified(classification_from(vec![0.3, 0.01, 0.2], 0.05)),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    write_scan(&path, &cells).unwrap();
    let rows = read_scan(&path).unwrap();
    let expected: Vec<_> = cells.iter().map(ScanCell::row).collect();
    assert_eq!(rows, expected);
    assert_eq!(rows[0].classification, "infeasible");
    assert_eq!(rows[1].classification, "regular");
    assert_eq!(rows[2].classification, "chaotic");
    assert_eq!(rows[2].n_chaotic_ic, Some(2));
    assert_eq!(rows[2].lambda_max, Some(0.3));
}

#[test]
fn a_model_compared_with_itself_never_breaks() {
    let times: Vec<f64> = (0..400).map(|k| k as f64 * 0.01).collect();
    let series = |name: &str| ModelSeries {
        model: name.into(),
        times: times.clone(),
        a: times.iter().map(|t| 3.0 * t.cos()).collect(),
        g: times.iter().map(|t| 0.5 + 0.2 * (2.0 * t).sin()).collect(),
    };
    let reports = break_reports(&series("large_n"), &series("hartree"), &series("exact"), 0.1, false).unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert_eq!(r.t_break_exact, BreakTime::NotReached);
        assert_eq!(r.t_break_mutual, BreakTime::NotReached);
    }
}
