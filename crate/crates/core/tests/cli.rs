//! End-to-end runs of the binary: exit codes, report contents and
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensorize"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tensorize")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn path_edges(n: usize) -> String {
    (0..n - 1).map(|i| format!("{i} {}\n", i + 1)).collect()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decompose_path8_budget1() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "path8.el", &path_edges(8));
    let out = dir.path().join("tree.json");
    let o = run(&["decompose", "--graph", s(&g), "--budget", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("height 3"));
    let r = report(&out);
    // Separators 3, then 1 and 5, then 6: the deepest leaf is {7}.
    assert_eq!(r["height"], 3);
    assert_eq!(r["tree"]["nodes"][0]["s"], serde_json::json!([3]));
    assert!(r["verification"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn decompose_partition_on_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "grid.toml", "[graph]\ngenerator = \"grid\"\nw = 4\nh = 4\n");
    let out = dir.path().join("p.json");
    let o = run(&["decompose", "--config", s(&cfg), "--linial-saks", "--r", "2", "--seed", "7", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let checks = r["verification"]["checks"].as_array().unwrap();
    for name in ["ball_diameter", "coverage"] {
        let c = checks.iter().find(|c| c["name"].as_str().unwrap().contains(name));
        assert_eq!(c.map(|c| &c["passed"]), Some(&Value::Bool(true)), "{name}: {checks:?}");
    }
}

#[test]
fn decompose_without_separator_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let k5: String = (0..5).flat_map(|u| (u + 1..5).map(move |v| format!("{u} {v}\n"))).collect();
    let g = write(dir.path(), "k5.el", &k5);
    let o = run(&["decompose", "--graph", s(&g), "--budget", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_graph_file_exits_two() {
    let o = run(&["decompose", "--graph", "/nonexistent/graph.el"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read graph"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--budget", "x"]).status.code(), Some(2));
    assert_eq!(run(&["phi-solve", "--form", "cubic"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[graph]\ngenerator = \"path\"\nsize = 4\n");
    let o = run(&["analyze", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_hardcore_path5() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p5.el", &path_edges(5));
    let out = dir.path().join("a.json");
    let csv = dir.path().join("a.csv");
    let o = run(&["analyze", "--graph", s(&g), "--model", "hardcore", "--lambda", "1", "--out", s(&out), "--csv", s(&csv), "--exact-optimal"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("audit: 0 violations / 1000 functions"), "{text}");
    let r = report(&out);
    // Three internal nodes with |S| = 1 on a height-2 path: (2(1+λ))^2 = 16.
    assert_eq!(r["report"]["composed_c"], 16.0);
    assert_eq!(r["report"]["coverage_a"], 1.0);
    assert_eq!(r["optimal"]["composed_dominates"], true);
    assert_eq!(r["config"]["functions"], 1000);
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5);
    assert!(rows.lines().nth(1).unwrap().contains("model-closed-form"));
}

#[test]
fn analyze_coloring_radius_one_uses_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.el", "0 1\n1 2\n0 2\n");
    let out = dir.path().join("c.json");
    let o = run(&["analyze", "--graph", s(&g), "--model", "coloring", "--q", "4", "--r", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let root = &r["report"]["per_node"][0];
    assert_eq!(root["c_s_source"], "model-closed-form");
    assert_eq!(r["report"]["radius_r"], 1);
}

#[test]
fn frozen_coloring_reports_the_failing_node() {
    // q = 3 on a triangle: single-site dynamics cannot move at all.
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "tri.el", "0 1\n1 2\n0 2\n");
    let o = run(&["analyze", "--graph", s(&g), "--model", "coloring", "--q", "3", "--r", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("node 0"));
}

#[test]
fn oversized_instance_names_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "big.toml", "[graph]\ngenerator = \"empty\"\nn = 30\n[analyze]\nenum_cap = 1000\n");
    let o = run(&["analyze", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1000"));
}

#[test]
fn simulate_exact_edge_and_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "k2.el", "0 1\n");
    let (out, c1, c2) = (dir.path().join("m.json"), dir.path().join("1.csv"), dir.path().join("2.csv"));
    for csv in [&c1, &c2] {
        let o = run(&["simulate", "--graph", s(&g), "--exact", "--out", s(&out), "--csv", s(csv)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
    let r = report(&out);
    // Worst-start TV from the edge chain: 2/3, 5/12, 7/24, 41/192 <= 1/4.
    assert_eq!(r["estimate"]["t_mix"], 3);
    assert!(std::fs::read_to_string(&c1).unwrap().starts_with("t,tv\n"));
}

#[test]
fn simulate_falls_back_to_coupling_over_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p12.el", &path_edges(12));
    let out = dir.path().join("m.json");
    let o = run(&["simulate", "--graph", s(&g), "--exact", "--cap", "10", "--trials", "20", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["fallback"]["used"], "coupling");
    assert_eq!(r["estimate"]["method"], "coupling");
}

#[test]
fn simulate_coupling_on_tree_colorings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", "[graph]\ngenerator = \"dary-tree\"\nd = 2\nh = 3\n[model]\nkind = \"coloring\"\nq = 3\n");
    let out = dir.path().join("m.json");
    let csv = dir.path().join("m.csv");
    let o = run(&["simulate", "--config", s(&cfg), "--coupling", "--trials", "100", "--seed", "1", "--out", s(&out), "--csv", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    let q = r["estimate"]["quantiles"].as_array().unwrap();
    assert_eq!(q.len(), 5);
    assert_eq!(r["estimate"]["trials"], 100);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("t,coalesced_fraction\n"));
}

#[test]
fn ssm_check_exits_zero_even_when_failing() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "star.el", "0 1\n0 2\n0 3\n0 4\n");
    let out = dir.path().join("s.json");
    let o = run(&["ssm-check", "--graph", s(&g), "--lambda", "20", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert!(r["estimate"]["status"].is_string());
}

#[test]
fn phi_solve_reports_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phi.json");
    let csv = dir.path().join("phi.csv");
    let o = run(&["phi-solve", "--out", s(&out), "--csv", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["table"]["all_hold"], true);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("log2_k,log_k,phi,envelope,holds\n"));
    // A start below the least valid one is rejected.
    let o = run(&["phi-solve", "--log-k0", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn reports_are_stable_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p6.el", &path_edges(6));
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["--threads", threads, "analyze", "--graph", s(&g), "--lambda", "0.5", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn report_schema_top_level_keys() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p4.el", &path_edges(4));
    let cases: [(&[&str], &[&str]); 4] = [
        (&["decompose"], &["command", "config", "graph", "tree", "height", "verification"]),
        (&["analyze"], &["command", "config", "graph", "model", "tree_verification", "report", "audit", "optimal"]),
        (&["simulate", "--exact"], &["command", "config", "graph", "model", "estimate", "fallback"]),
        (&["ssm-check"], &["command", "config", "graph", "model", "estimate"]),
    ];
    for (args, keys) in cases {
        let out = dir.path().join("r.json");
        let mut full = args.to_vec();
        full.extend(["--graph", s(&g), "--out", s(&out)]);
        assert_eq!(run(&full).status.code(), Some(0), "{args:?}");
        let r = report(&out);
        let obj = r.as_object().unwrap();
        for k in keys {
            assert!(obj.contains_key(*k), "{args:?} lacks {k}");
        }
    }
}
