use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn psiflat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psiflat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout line is JSON"))
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fig1(dir: &Path) -> PathBuf {
    let p = dir.join("fig1.json");
    std::fs::write(
        &p,
        r#"{"format":"psiflat-checkpoint","version":1,"dims":[2,1,2],"weights":[[1.0,2.0],[1.0,3.0]],"seed":0,"meta":{}}"#,
    )
    .unwrap();
    p
}

/// A small trained checkpoint that records its dataset.
fn trained(dir: &Path) -> PathBuf {
    let p = dir.join("net.json");
    let out = psiflat(&[
        "train",
        "--dataset",
        "blobs:classes=2,dim=3,n=40,sigma=0.4,seed=3",
        "--dims",
        "3,4,4,2",
        "--epochs",
        "20",
        "--batch",
        "4",
        "--seed",
        "3",
        "--out",
        s(&p),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn verify_quick_passes() {
    let out = psiflat(&["verify", "--quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = json_lines(&out);
    assert!(lines.len() >= 10);
    assert!(lines.iter().all(|l| l["passed"] == true));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}

#[test]
fn paths_on_fig1() {
    let dir = tempfile::tempdir().unwrap();
    let ck = fig1(dir.path());
    let out = psiflat(&["paths", "--dims", "2,1,2", "--checkpoint", s(&ck)]);
    assert!(out.status.success());
    let v = &json_lines(&out)[0];
    assert_eq!(v["basis_count"], 3);
    assert_eq!(v["m"], 4);
    assert_eq!(v["H"], 1);
    assert_eq!(v["values"], serde_json::json!([1.0, 2.0, 3.0]));
    assert_eq!(v["skeleton"], serde_json::json!([[0, 0, 0], [1, 0, 0]]));
}

#[test]
fn psi_flatness_survives_transform() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let moved = dir.path().join("moved.json");
    let out = psiflat(&["transform", "--checkpoint", s(&ck), "--out", s(&moved), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_lines(&out)[0]["invariant"], true);

    let run = |p: &Path| {
        let out = psiflat(&["flatness", "--checkpoint", s(p), "--space", "psi", "--measure", "all", "--eps", "0.01"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json_lines(&out)[0].as_array().unwrap().clone()
    };
    let (a, b) = (run(&ck), run(&moved));
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (x["value"].as_f64().unwrap(), y["value"].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1e-12), "{x} vs {y}");
    }

    // Weight-space trace is not invariant.
    let trace = |p: &Path| {
        let out = psiflat(&["flatness", "--checkpoint", s(p), "--space", "weight", "--measure", "trace"]);
        json_lines(&out)[0][0]["value"].as_f64().unwrap()
    };
    assert!((trace(&ck) - trace(&moved)).abs() > 1e-6);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let run = |t: &str| {
        psiflat(&["--threads", t, "flatness", "--checkpoint", s(&ck), "--mc", "50", "--samples", "16"]).stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn landscape_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = psiflat(&["landscape", "--checkpoint", s(&ck), "--res", "7", "--seed", "2", "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("t1,t2,loss"));
    assert_eq!(text.lines().count(), 50);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let svg = dir.path().join("c.svg");
    let out = psiflat(&["landscape", "--checkpoint", s(&ck), "--res", "9", "--out", s(&svg)]);
    assert!(out.status.success());
    assert_eq!(json_lines(&out)[0]["format"], "svg-contour");
}

#[test]
fn bound_report() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let out = psiflat(&["bound", "--checkpoint", s(&ck), "--eps", "0.001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &json_lines(&out)[0];
    assert!(v["psi"].as_f64().unwrap() > 0.0);
    assert!(v["pac_bayes"]["bound"].as_f64().unwrap() > 0.0);
    assert_eq!(v["holds"], true);
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let ck = fig1(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!(r#"{{"checkpoint": "{}", "paths": {{"list": true}}}}"#, s(&ck))).unwrap();
    let out = psiflat(&["--config", s(&cfg), "paths"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &json_lines(&out)[0];
    assert_eq!(v["basis_count"], 3);
    assert_eq!(v["paths"].as_array().unwrap().len(), 3);

    std::fs::write(&cfg, r#"{"dims": [2, 2, 2], "seed": 1}"#).unwrap();
    let out = psiflat(&["--config", s(&cfg), "paths", "--dims", "3,2,2,1"]);
    assert!(out.status.success());
    assert_eq!(json_lines(&out)[0]["basis_count"], 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(psiflat(&["paths", "--bogus"]).status.code(), Some(1));
    assert_eq!(psiflat(&[]).status.code(), Some(1));
    assert_eq!(psiflat(&["--threads", "0", "verify", "--quick"]).status.code(), Some(1));
    assert_eq!(psiflat(&["paths"]).status.code(), Some(1));

    let missing = dir.path().join("nope.json");
    let out = psiflat(&["flatness", "--checkpoint", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    // No dataset recorded and none given.
    let ck = fig1(dir.path());
    assert_eq!(psiflat(&["flatness", "--checkpoint", s(&ck)]).status.code(), Some(1));

    // Schema mismatch.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format":"psiflat-checkpoint","version":7,"dims":[2,1,2],"weights":[[1,2],[1,3]]}"#).unwrap();
    let out = psiflat(&["paths", "--checkpoint", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());

    // Zero skeleton weight: the basis is undefined.
    let zero = dir.path().join("zero.json");
    std::fs::write(&zero, r#"{"format":"psiflat-checkpoint","version":1,"dims":[2,1,2],"weights":[[0,2],[1,3]],"seed":0,"meta":{}}"#).unwrap();
    assert_eq!(psiflat(&["paths", "--checkpoint", s(&zero)]).status.code(), Some(2));
}
