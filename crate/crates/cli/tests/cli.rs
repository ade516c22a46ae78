//! End-to-end tests against the built `gflow` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gflow_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gflow"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gflow-cli-test-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| line.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn run_gonzalez_reproduces_scalar_states() {
    let dir = tmp_dir("run-gonzalez");
    let out = dir.join("traj.csv");
    let status = gflow(&[
        "run",
        "--scheme",
        "gonzalez",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "1",
        "--steps",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let states = csv_column(&out, 2);
    assert_eq!(states.len(), 3);
    assert!((states[0] - 1.0).abs() < 1e-12);
    assert!((states[1] - 0.6).abs() < 1e-12);
    assert!((states[2] - 0.36).abs() < 1e-12);
}

#[test]
fn run_euler_obstacle_reaches_the_obstacle() {
    let dir = tmp_dir("run-obstacle");
    let out = dir.join("traj.csv");
    let output = gflow(&[
        "run",
        "--scheme",
        "euler",
        "--potential",
        "obstacle",
        "--u0",
        "2",
        "--T",
        "1",
        "--steps",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let states = csv_column(&out, 2);
    assert!((states[10] - std::f64::consts::SQRT_2).abs() <= 1e-9);
}

#[test]
fn invalid_scheme_exits_2_with_usage() {
    let output = gflow(&[
        "run",
        "--scheme",
        "rk4",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "1",
        "--steps",
        "2",
        "--out",
        "/tmp/never-written.csv",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("expected euler"), "{err}");
}

#[test]
fn unknown_flag_rejected() {
    let output = gflow(&["run", "--frobnicate", "1"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn oversized_grids_rejected() {
    let output = gflow(&[
        "run",
        "--scheme",
        "euler",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "1",
        "--steps",
        "999999999999",
        "--out",
        "/tmp/never.csv",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let output = gflow(&[
        "rates",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--k-min",
        "3",
        "--k-max",
        "40",
        "--out",
        "/tmp/never.csv",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn gonzalez_on_obstacle_exits_3_with_partial_trajectory() {
    let dir = tmp_dir("gonzalez-obstacle");
    let out = dir.join("traj.csv");
    let output = gflow(&[
        "run",
        "--scheme",
        "gonzalez",
        "--potential",
        "obstacle",
        "--u0",
        "2",
        "--T",
        "1",
        "--steps",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    // Partial trajectory still written: header + states u_0..u_5.
    let states = csv_column(&out, 2);
    assert_eq!(states.len(), 6);
    assert!((states[5] - 1.5).abs() < 1e-12);
    let summary: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("summary JSON on stdout");
    assert_eq!(summary["failed"], serde_json::Value::Bool(true));
    assert_eq!(summary["steps_completed"], 5);
}

#[test]
fn rates_reports_expected_slopes() {
    let dir = tmp_dir("rates");
    let out = dir.join("rates.csv");
    let json_path = dir.join("rates.json");
    let svg_path = dir.join("rates.svg");
    let output = gflow(&[
        "rates",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "1",
        "--k-min",
        "3",
        "--k-max",
        "8",
        "--out",
        out.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
        "--svg",
        svg_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let schemes = report["schemes"].as_array().unwrap();
    let slope_of = |name: &str| {
        schemes.iter().find(|s| s["scheme"] == name).unwrap()["slope"]
            .as_f64()
            .unwrap()
    };
    assert!((slope_of("euler") - 1.0).abs() <= 0.15);
    assert!((slope_of("gonzalez") - 2.0).abs() <= 0.15);
    assert!((slope_of("dg-root:far") - 0.5).abs() <= 0.15);
    assert!((slope_of("dg-min") - 1.0).abs() <= 0.15);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    // The plot is backed by the CSV it renders.
    assert!(out.exists());
}

#[test]
fn rates_with_bad_potential_is_config_error() {
    // Synthetic-errors passthrough is covered by estimate_rate unit tests;
    // invalid potential specs must be rejected before any run starts.
    let output = gflow(&[
        "rates",
        "--potential",
        "quad1d:0",
        "--u0",
        "1",
        "--out",
        "/tmp/never.csv",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn compare_emits_closed_form_matched_tables() {
    let dir = tmp_dir("compare");
    let prefix = dir.join("cmp").to_str().unwrap().to_string();
    let output = gflow(&[
        "compare",
        "--lambda",
        "1",
        "--tau-lambdas",
        "0.1,0.5,1,2,5,20,100",
        "--iterations",
        "20",
        "--out-prefix",
        &prefix,
    ]);
    assert!(output.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let dev = summary["max_closed_form_deviation"].as_f64().unwrap();
    assert!(dev <= 1e-9, "numeric vs closed-form deviation {dev}");
    // Singular Far-branch behavior at τλ = 1: state 0 after one step, φ = 0.
    let series = std::fs::read_to_string(format!("{prefix}_series_tl1.csv")).unwrap();
    let row: Vec<&str> = series.lines().nth(2).unwrap().split(',').collect();
    // Columns: iter, then (numeric, closed) pairs: euler, gonzalez, far, min.
    assert_eq!(row[0], "1");
    let far_phi: f64 = row[5].parse().unwrap();
    assert!(far_phi.abs() <= 1e-20);
    let reduction = std::fs::read_to_string(format!("{prefix}_reduction.csv")).unwrap();
    assert_eq!(reduction.lines().count(), 8);
}

#[test]
fn certify_clean_sweep_and_adversarial() {
    let dir = tmp_dir("certify");
    // Library De Giorgi root trajectory: exit 0.
    let traj = dir.join("dg.csv");
    assert!(gflow(&[
        "run",
        "--scheme",
        "dg-root:far",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "1",
        "--steps",
        "16",
        "--out",
        traj.to_str().unwrap(),
    ])
    .status
    .success());
    let output = gflow(&[
        "certify",
        "--in",
        traj.to_str().unwrap(),
        "--potential",
        "quad1d:1",
    ]);
    assert_eq!(output.status.code(), Some(0));

    // Frozen trajectory: exit 4, total (T/2)‖Dφ(u0)‖².
    let frozen = dir.join("frozen.csv");
    let mut rows = vec!["step,t,u_0,energy,increment_norm,slope_norm,residual,status".to_string()];
    for i in 0..=8 {
        rows.push(format!("{i},{},1,0.5,0,1,0,Exact", i as f64 / 8.0));
    }
    std::fs::write(&frozen, rows.join("\n") + "\n").unwrap();
    let output = gflow(&[
        "certify",
        "--in",
        frozen.to_str().unwrap(),
        "--potential",
        "quad1d:1",
    ]);
    assert_eq!(output.status.code(), Some(4));
    let cert: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!((cert["total"].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    assert_eq!(cert["verdict"], "Inconclusive");

    // Euler τ-sweep directory on the logistic: CertifiedTrend at order ≈ 1.
    let sweep = dir.join("sweep");
    std::fs::create_dir_all(&sweep).unwrap();
    for k in 3..=8u32 {
        let n = 1u32 << k;
        let member = sweep.join(format!("traj_{n:04}.csv"));
        assert!(gflow(&[
            "run",
            "--scheme",
            "euler",
            "--potential",
            "logistic",
            "--u0",
            "0",
            "--T",
            "1",
            "--steps",
            &n.to_string(),
            "--out",
            member.to_str().unwrap(),
        ])
        .status
        .success());
    }
    let output = gflow(&[
        "certify",
        "--in",
        sweep.to_str().unwrap(),
        "--potential",
        "logistic",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(cert["verdict"], "CertifiedTrend");
    let order = cert["fitted_order"].as_f64().unwrap();
    assert!((order - 1.0).abs() <= 0.25, "order {order}");

    // Malformed CSV: exit 2.
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "not,a,trajectory\n1,2,3\n").unwrap();
    let output = gflow(&[
        "certify",
        "--in",
        bad.to_str().unwrap(),
        "--potential",
        "quad1d:1",
    ]);
    assert_eq!(output.status.code(), Some(2));

    // Dimension mismatch between trajectory and potential: exit 2.
    let output = gflow(&[
        "certify",
        "--in",
        traj.to_str().unwrap(),
        "--potential",
        "aniso2d",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tmp_dir("determinism");
    let args_for = |tag: &str, dir: &Path| {
        let out = dir.join(format!("{tag}.csv"));
        let json = dir.join(format!("{tag}.json"));
        (out, json)
    };
    let (out_a, json_a) = args_for("a", &dir);
    let (out_b, json_b) = args_for("b", &dir);
    for (out, json) in [(&out_a, &json_a), (&out_b, &json_b)] {
        let output = gflow_env(
            &[
                "rates",
                "--potential",
                "aniso2d",
                "--u0",
                "1,1",
                "--k-min",
                "3",
                "--k-max",
                "6",
                "--schemes",
                "euler,gonzalez",
                "--out",
                out.to_str().unwrap(),
                "--json",
                json.to_str().unwrap(),
            ],
            // Different thread caps must not change the bytes.
            &[("GFLOW_THREADS", if out == &out_a { "1" } else { "4" })],
        );
        assert!(output.status.success());
    }
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
    assert_eq!(
        std::fs::read(&json_a).unwrap(),
        std::fs::read(&json_b).unwrap()
    );
}

#[test]
fn generic_mode_writes_structure_columns() {
    let dir = tmp_dir("generic");
    let out = dir.join("gen.csv");
    let output = gflow(&[
        "run",
        "--mode",
        "generic:0.5",
        "--u0",
        "1,0.8,0",
        "--T",
        "0.1",
        "--steps",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let header = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.ends_with("energy_E,entropy_phi,compat_defect"));
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(summary["structure"]["compat_entropy"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn gen_mode_weighted_dissipation() {
    let dir = tmp_dir("gen-mode");
    let out = dir.join("gen.csv");
    let output = gflow(&[
        "run",
        "--mode",
        "gen:2:2",
        "--scheme",
        "euler",
        "--potential",
        "quad1d:1",
        "--u0",
        "1",
        "--T",
        "0.5",
        "--steps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let final_state = summary["final_state"][0].as_f64().unwrap();
    assert!((final_state - 0.8).abs() <= 1e-9);
}
