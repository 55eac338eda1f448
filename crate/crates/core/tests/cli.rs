//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use serde_json::Value;

use quiver_sheaf::{CellularSheaf, DimensionVector, Graph};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quiver-sheaf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Single edge with 3-dimensional vertex stalks and a 2-dimensional edge stalk.
fn write_rect_edge(dir: &Path) -> std::path::PathBuf {
    let graph = Graph::path(2).unwrap();
    let dims = DimensionVector::new(vec![3, 3], vec![2]).unwrap();
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let sheaf = CellularSheaf::new(graph, dims, vec![a.clone(), a]).unwrap();
    let path = dir.join("edge.json");
    std::fs::write(&path, sheaf.to_json()).unwrap();
    path
}

#[test]
fn generate_then_inspect_two_block() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tb");
    let out = run(&["gen-synth", "--kind", "two-block", "--n-per-block", "12", "--seed", "3", "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&run(&["inspect-dataset", p(&data)]));
    assert_eq!(summary["nodes"], 24);
    assert_eq!(summary["classes"], 2);
    assert!(summary["edge_homophily"].as_f64().unwrap() <= 1.0);
}

#[test]
fn moment_reports_the_escape_direction() {
    let dir = tempfile::tempdir().unwrap();
    let sheaf = write_rect_edge(dir.path());
    let v = stdout_json(&run(&["moment", p(&sheaf)]));
    let text = v.to_string();
    // Objects: two vertices (d = 3) and one edge (d = 2); the escape θ is (1, 1, −3).
    assert!(text.contains("-3"), "{text}");
    let csv = run(&["--format", "csv", "moment", p(&sheaf)]);
    let body = String::from_utf8(csv.stdout).unwrap();
    assert!(body.starts_with("object,dim,trace,central_defect,theta"), "{body}");
    assert_eq!(body.lines().count(), 4);
}

#[test]
fn diffuse_writes_an_energy_trace() {
    let dir = tempfile::tempdir().unwrap();
    let sheaf = write_rect_edge(dir.path());
    let signal = dir.path().join("x.csv");
    std::fs::write(&signal, "1\n0\n0\n-1\n0\n0\n").unwrap();
    let out = run(&["--format", "csv", "diffuse", p(&sheaf), "--signal", p(&signal), "--layers", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = body.lines().collect();
    assert_eq!(rows[0], "step,energy");
    assert_eq!(rows.len(), 7);
    let energies: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((energies[0] - 4.0).abs() < 1e-12);
    assert!(energies.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn verify_runs_a_named_suite() {
    let v = stdout_json(&run(&["verify", "--suite", "stability-wall"]));
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 1);
    assert_eq!(arr[0]["property"], "stability-wall");
}

#[test]
fn train_emits_a_record_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tb");
    assert!(run(&["gen-synth", "--kind", "two-block", "--n-per-block", "10", "--out", p(&data)]).status.success());
    let model = dir.path().join("model.json");
    let history = dir.path().join("history.csv");
    let result = dir.path().join("result.json");
    let out = run(&[
        "train", p(&data), "--epochs", "20", "--save-model", p(&model), "--history", p(&history), "--out", p(&result),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let acc = v["records"][0]["test_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(model.exists());
    assert!(std::fs::read_to_string(&history).unwrap().starts_with("epoch,task,cent,theta_mm,total,val_acc"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["inspect-dataset", p(&dir.path().join("nope"))]);
    assert_eq!(missing.status.code(), Some(1));

    let data = dir.path().join("tb");
    assert!(run(&["gen-synth", "--kind", "two-block", "--n-per-block", "6", "--out", p(&data)]).status.success());
    std::fs::write(data.join("edges.tsv"), "0\t1\n0\tzz\n").unwrap();
    let bad = run(&["inspect-dataset", p(&data)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("edges.tsv:2"));

    let sheaf = dir.path().join("s.json");
    std::fs::write(&sheaf, "{not json").unwrap();
    assert_eq!(run(&["moment", p(&sheaf)]).status.code(), Some(2));
}
