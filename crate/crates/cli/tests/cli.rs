use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rdsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdsnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rdsnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rdsnet(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A population edge list plus one simulated study drawn on it.
fn simulated(dir: &Path) -> PathBuf {
    let gen = dir.join("gen");
    ok(&[
        "simulate", "--population", "erdos_renyi:300:0.03", "--dist", "gamma", "--shape", "0.5", "--scale", "2",
        "--n", "40", "--seeds", "2", "--rng-seed", "7", "--out", p(&gen),
    ]);
    let graph = dir.join("g.tsv");
    std::fs::copy(gen.join("population.tsv"), &graph).unwrap();
    let d = dir.join("d");
    ok(&[
        "simulate", "--graph", p(&graph), "--dist", "exponential", "--rate", "1", "--n", "50", "--seeds", "1",
        "--rng-seed", "7", "--out", p(&d),
    ]);
    d
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = std::fs::read(a.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let y = std::fs::read(b.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn simulate_output_feeds_every_other_subcommand() {
    let tmp = TempDir::new().unwrap();
    let d = simulated(tmp.path());
    for f in ["observed.json", "true_edges.tsv", "events.csv", "manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let study = d.join("observed.json");
    let truth = d.join("true_edges.tsv");

    let line = ok(&["loglik", "--study", p(&study), "--edges", p(&truth), "--dist", "exponential", "--rate", "1"]);
    let fields: Vec<&str> = line.trim().split('\t').collect();
    assert_eq!(fields.len(), 2, "{line}");
    assert_eq!(fields[0], fields[1]);
    assert!(fields[0].parse::<f64>().unwrap().is_finite());

    let r = tmp.path().join("r");
    ok(&[
        "reconstruct", "--study", p(&study), "--dist", "gamma", "--shape", "0.5", "--scale", "2", "--iters", "5000",
        "--rng-seed", "3", "--trace-out", "trace.csv", "--out", p(&r),
    ]);
    let est: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.join("estimate.json")).unwrap()).unwrap();
    assert!(est["logpost"].as_f64().unwrap().is_finite());
    assert!(est["edges"].as_array().unwrap().len() >= 49);
    let trace = std::fs::read_to_string(r.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iter,gamma,logpost,accepted");

    let e = tmp.path().join("e");
    ok(&["estimate", "--study", p(&study), "--edges", p(&truth), "--family", "exponential", "--out", p(&e)]);
    let theta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(e.join("theta.json")).unwrap()).unwrap();
    assert_eq!(theta["theta"]["family"], "exponential");
    assert_eq!(theta["converged"], true);

    let pl = tmp.path().join("pl");
    ok(&[
        "pipeline", "--study", p(&study), "--dist", "gamma", "--iters", "3000", "--iota-max", "2", "--true-edges",
        p(&truth), "--rng-seed", "5", "--out", p(&pl),
    ]);
    for f in ["results.json", "metrics.csv", "true_gs.dot", "observed_gr.dot", "overlay.dot", "estimated_gs.dot"] {
        assert!(pl.join(f).exists(), "{f}");
    }

    let x = tmp.path().join("x");
    ok(&["export", "--dot", "--study", p(&study), "--estimate", p(&r.join("estimate.json")), "--truth", p(&truth), "--out", p(&x)]);
    let dot = std::fs::read_to_string(x.join("estimated_gs.dot")).unwrap();
    assert!(dot.contains("style=dashed"));
    assert!(x.join("manifest.json").exists());
}

#[test]
fn replaying_a_manifest_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let d = simulated(tmp.path());
    let d2 = tmp.path().join("d2");
    ok(&["replay", "--manifest", p(&d.join("manifest.json")), "--out", p(&d2)]);
    same_files(&d, &d2, &["observed.json", "true_edges.tsv", "events.csv"]);

    let r = tmp.path().join("r");
    ok(&[
        "reconstruct", "--study", p(&d.join("observed.json")), "--dist", "exponential", "--rate", "1", "--iters",
        "4000", "--chains", "2", "--rng-seed", "9", "--trace-out", "t.csv", "--out", p(&r),
    ]);
    let r2 = tmp.path().join("r2");
    ok(&["replay", "--manifest", p(&r.join("manifest.json")), "--out", p(&r2)]);
    same_files(&r, &r2, &["estimate.json", "t.csv"]);

    let x = tmp.path().join("x");
    ok(&[
        "experiment", "gamma-sweep", "--alphas", "0.5", "--replicates", "3", "--n", "30", "--population",
        "erdos_renyi:200:0.04", "--iters", "2000", "--iota-max", "2", "--rng-seed", "11", "--out", p(&x),
    ]);
    let x2 = tmp.path().join("x2");
    ok(&["replay", "--manifest", p(&x.join("manifest.json")), "--out", p(&x2)]);
    same_files(&x, &x2, &["results.json", "metrics.csv"]);
}

#[test]
fn config_file_and_flags_are_interchangeable() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"population": "erdos_renyi:200:0.04", "dist": "gamma", "shape": 1.5, "scale": 0.5, "n": 30, "rng_seed": 4}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&a)]);
    ok(&[
        "simulate", "--population", "erdos_renyi:200:0.04", "--dist", "gamma", "--shape", "1.5", "--scale", "0.5",
        "--n", "30", "--rng-seed", "4", "--out", p(&b),
    ]);
    same_files(&a, &b, &["observed.json", "true_edges.tsv", "events.csv", "population.tsv"]);
    let ma: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["config"]["seeds"], 3, "defaults are materialized");
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["simulate", "--bogus"]), 1);
    assert_eq!(code(&["simulate", "--dist", "gamma", "--shape", "1"]), 1, "missing --scale");
    assert_eq!(code(&["simulate", "--dist", "weibull", "--out", "x"]), 1);

    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"n": 3, "seeds": [1], "times": [0.0, 1.0, 2.0], "degrees": [1, 1, 1],
            "recruitment_edges": [[1, 2], [2, 3]], "coupons": {"per_subject_coupons": 3, "derive": true}}"#,
    )
    .unwrap();
    let out = rdsnet(&["reconstruct", "--study", p(&bad), "--dist", "exponential", "--rate", "1", "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degrees"), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = tmp.path().join("missing.json");
    assert_eq!(
        code(&["reconstruct", "--study", p(&missing), "--dist", "exponential", "--rate", "1", "--out", p(&tmp.path().join("o2"))]),
        3
    );
}
