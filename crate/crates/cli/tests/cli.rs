use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn flowcredit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flowcredit"));
    cmd.args(args).env_remove("FLOWCREDIT_CONFIG_CAP");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn gen(kind: &[&str], dir: &Path) {
    let mut args = vec!["gen"];
    args.extend_from_slice(kind);
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    let out = flowcredit(&args, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn case_args(dir: &Path) -> Vec<String> {
    let p = |f: &str| dir.join(f).to_str().unwrap().to_string();
    vec!["--graph".into(), p("graph.json"), "--fg".into(), p("fg.json"), "--bg".into(), p("bg.json")]
}

fn attribute(dir: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args: Vec<String> = vec!["attribute".into()];
    args.extend(case_args(dir));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    flowcredit(&refs, env)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn edge_credit(report: &Value, from: &str, to: &str) -> f64 {
    report["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["from"] == from && e["to"] == to)
        .unwrap_or_else(|| panic!("no edge {from}->{to}"))["credit"]
        .as_f64()
        .unwrap()
}

#[test]
fn chain_with_all_checks_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["chain"], dir.path());
    let out = attribute(dir.path(), &["--check-axioms", "--dummy-scan"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["checks"].as_array().unwrap().len(), 3);
    assert!((edge_credit(&r, "X3", "X4") + 1.82).abs() < 1e-9);
    assert_eq!(edge_credit(&r, "X1", "f"), 0.0);
}

#[test]
fn report_file_and_dot_are_written() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["or"], dir.path());
    let report = dir.path().join("r.json");
    let dot = dir.path().join("r.dot");
    let out = attribute(
        dir.path(),
        &["--out", report.to_str().unwrap(), "--dot", dot.to_str().unwrap(), "--top-k", "1"],
        &[],
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(edge_credit(&r, "X1", "f"), 0.5);
    let dot = fs::read_to_string(&dot).unwrap();
    assert!(dot.starts_with("digraph flow {"));
    assert_eq!(dot.lines().filter(|l| l.contains("label=")).count(), 1);
    assert!(!dot.contains("S*"));
}

#[test]
fn super_source_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["or"], dir.path());
    let hidden = json(&attribute(dir.path(), &[], &[]));
    assert_eq!(hidden["edges"].as_array().unwrap().len(), 2);
    let shown = json(&attribute(dir.path(), &["--show-super-source"], &[]));
    assert_eq!(shown["edges"].as_array().unwrap().len(), 4);
    assert_eq!(edge_credit(&shown, "S*", "X1"), 0.5);
}

#[test]
fn monte_carlo_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["diamond"], dir.path());
    let a = attribute(dir.path(), &["--mc", "300", "--seed", "11"], &[]);
    let b = attribute(dir.path(), &["--mc", "300", "--seed", "11"], &[]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = json(&a);
    assert_eq!(r["method"], "monte-carlo");
    assert_eq!(r["sample_count"], 300);
    assert!(r["edges"][0]["stderr"].is_number());
    let c = attribute(dir.path(), &["--mc", "300", "--seed", "12"], &[]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn several_backgrounds_are_averaged() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["or"], dir.path());
    let bg = dir.path().join("bg.json").to_str().unwrap().to_string();
    let out = attribute(dir.path(), &["--bg", &bg], &[]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["backgrounds"], 2);
    assert_eq!(edge_credit(&r, "X2", "f"), 0.5);
}

#[test]
fn config_cap_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["chain"], dir.path());
    let out = attribute(dir.path(), &[], &[("FLOWCREDIT_CONFIG_CAP", "3")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Monte Carlo"));
    assert!(attribute(dir.path(), &["--mc", "10"], &[("FLOWCREDIT_CONFIG_CAP", "3")]).status.success());
}

#[test]
fn exact_and_mc_conflict() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["or"], dir.path());
    assert_eq!(attribute(dir.path(), &["--exact", "--mc", "5"], &[]).status.code(), Some(2));
    assert_eq!(attribute(dir.path(), &["--mc", "0"], &[]).status.code(), Some(2));
}

#[test]
fn malformed_graph_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("graph.json");
    fs::write(&g, "{\n  \"nodes\": [,\n}\n").unwrap();
    let out = flowcredit(&["validate", "--graph", g.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("graph.json:2:"), "{err}");
}

#[test]
fn validate_counts_configurations() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["chain", "--len", "3", "--delta", "-2"], dir.path());
    let g = dir.path().join("graph.json");
    let out = flowcredit(&["validate", "--graph", g.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("ok: 4 nodes, 5 edges, sink `f`"), "{text}");
    assert!(text.contains("4e0 configurations"), "{text}");
}

#[test]
fn random_case_matches_linear_oracle() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["random", "--n", "6", "--p", "0.6", "--seed", "5"], dir.path());
    let r = json(&attribute(dir.path(), &["--check-axioms"], &[]));
    assert_eq!(r["passed"], true);

    let mut args = vec!["oracle".to_string(), "linear".to_string()];
    args.extend(case_args(dir.path()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = flowcredit(&refs, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth = json(&out);
    for (node, psi) in truth["indirect"].as_object().unwrap() {
        let got = r["nodes"][node].as_f64().unwrap();
        assert!((got - psi.as_f64().unwrap()).abs() < 1e-9, "{node}: {got} vs {psi}");
    }
}

#[test]
fn owen_and_shapley_oracles_on_or() {
    let dir = tempfile::tempdir().unwrap();
    gen(&["or"], dir.path());
    for kind in ["owen", "shapley"] {
        let mut args = vec!["oracle".to_string(), kind.to_string()];
        args.extend(case_args(dir.path()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = flowcredit(&refs, &[]);
        assert!(out.status.success(), "{kind}");
        let v = json(&out);
        let vals: Vec<f64> = v.as_object().unwrap().values().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(vals, vec![0.5, 0.5], "{kind}");
    }
}
