//! End-to-end tests of the `banditlab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_banditlab"))
}

fn write_config(dir: &Path, name: &str, v: &Value) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn minimal() -> Value {
    json!({
        "experiment_id": "minimal",
        "domain": {"kind": "unit_ball", "dim": 2},
        "adversary": {"kind": "generic_gaussian", "mean": [0.0, 0.0], "variance": 0.0},
        "player": {"kind": "fixed_point", "w": [0.0, 0.0]},
        "grid": {"d": [2], "T": [10]},
        "repetitions": 1,
        "master_seed": 7,
        "protocol": "regret"
    })
}

fn sweep() -> Value {
    json!({
        "experiment_id": "cyl",
        "domain": {"kind": "cylinder"},
        "adversary": {"kind": "cylinder_construction", "mu": "auto"},
        "player": {"kind": "exp3"},
        "grid": {"dims": [3, 4, 5], "horizons": [400, 800, 1600]},
        "repetitions": 3,
        "master_seed": 11,
        "protocol": "regret"
    })
}

#[test]
fn minimal_config_gives_zero_regret() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &minimal());
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("runs.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "experiment_id", "domain_kind", "dim", "adversary_kind", "player_kind", "T", "repetition",
            "seed", "sigma_or_j", "regret", "error", "wall_ms"
        ]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][9].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn reruns_and_manifest_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &sweep());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(run(&cfg, &a, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &["--workers", "3"]).status.code(), Some(0));
    assert_eq!(run(&a.join("manifest.json"), &c, &[]).status.code(), Some(0));
    for f in ["runs.csv", "aggregate.csv", "diagnostics.csv", "manifest.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_records_auto_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &sweep());
    let out = tmp.path().join("o");
    assert_eq!(run(&cfg, &out, &["--seed-override", "99"]).status.code(), Some(0));
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["master_seed"], 99);
    let cells = m["resolved"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    for c in cells {
        let d = c["dim"].as_u64().unwrap() as f64 - 1.0;
        let t = c["T"].as_u64().unwrap() as f64;
        let mu = c["adversary"]["mu"].as_f64().unwrap();
        assert!((mu - (d / t).sqrt() / 16.0).abs() < 1e-15);
        assert!(c["player"]["eta"].as_f64().unwrap() > 0.0);
        let lb = c["lower_bound"].as_f64().unwrap();
        assert!((lb - d * t.sqrt() / 128.0).abs() < 1e-12);
    }
}

#[test]
fn corner_scale_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "experiment_id": "corner",
        "domain": {"kind": "unit_ball"},
        "adversary": {"kind": "generic_gaussian", "mean": {"norm": 0.5, "direction": "diagonal"}, "variance": {"total": 0.25}},
        "player": {"kind": "corner_estimator"},
        "grid": {"d": [4], "T": [100]},
        "repetitions": 2,
        "master_seed": 1,
        "protocol": "error"
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("o");
    assert_eq!(run(&cfg, &out, &[]).status.code(), Some(0));
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["resolved"][0]["player"]["mu"], 0.5);
    // c^2 = ||m||^2 + total variance = 1/2, bound 2c sqrt(d/T).
    let ub = m["resolved"][0]["upper_bound"].as_f64().unwrap();
    assert!((ub - 2.0 * 0.5f64.sqrt() * 0.2).abs() < 1e-12);
}

#[test]
fn incompatible_triple_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["domain"] = json!({"kind": "simplex"});
    v["player"] = json!({"kind": "digit_decoder"});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exact-rational"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["repetitons"] = json!(3);
    let cfg = write_config(tmp.path(), "typo.json", &v);
    assert_eq!(run(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let mut v = minimal();
    v["repetitions"] = json!(0);
    let cfg = write_config(tmp.path(), "zero.json", &v);
    assert_eq!(run(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let mut v = sweep();
    v["grid"]["T"] = json!([10]);
    v["grid"].as_object_mut().unwrap().remove("horizons");
    let cfg = write_config(tmp.path(), "short.json", &v);
    assert_eq!(run(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let o = run(&tmp.path().join("missing.json"), &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

fn validate(args: &[&str]) -> (i32, String) {
    let o = bin().arg("validate").args(args).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn validate_examples() {
    let (code, out) = validate(&["--adversary", r#"{"kind":"cylinder_construction","dim":5}"#, "--samples", "100000"]);
    assert_eq!(code, 0, "{out}");
    let mu = (4.0f64 / 10_000.0).sqrt() / 16.0;
    assert!(out.contains(&format!("mean_dual_norm: {:.6}", 0.25 + mu * 2.0)), "{out}");

    let (code, out) = validate(&[
        "--adversary",
        r#"{"kind":"generic_gaussian","mean":[2.0,0.0]}"#,
        "--domain",
        r#"{"kind":"unit_ball"}"#,
        "--samples",
        "10000",
    ]);
    assert_eq!(code, 1);
    assert!(out.contains("mean_dual_norm: 2.000000"));
    assert!(out.contains("result: FAIL"));

    let (code, _) = validate(&["--adversary", r#"{"kind":"simplex_construction","mu":0.5,"dim":4}"#]);
    assert_eq!(code, 0);

    let (code, _) = validate(&["--adversary", r#"{"kind":"simplex_construction","dim":4,"oops":1}"#]);
    assert_eq!(code, 2);
    let (code, _) = validate(&["--adversary", "{not json"]);
    assert_eq!(code, 2);
}

#[test]
fn analyze_sweep_and_single_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &sweep());
    let out = tmp.path().join("sweep");
    assert_eq!(run(&cfg, &out, &[]).status.code(), Some(0));
    let o = bin().arg("analyze").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: Value = serde_json::from_slice(&fs::read(out.join("fit.json")).unwrap()).unwrap();
    for k in ["alpha", "beta", "logC", "r2"] {
        assert!(fit[k].is_number(), "{k}");
    }
    let plot = fs::read_to_string(out.join("regret_vs_T_d4.dat")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("# T regret lower_bound"));
    for line in lines {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert!((cols[2] - 3.0 * cols[0].sqrt() / 128.0).abs() < 1e-12);
    }
    assert!(out.join("regret_vs_d_T800.dat").exists());

    let cfg = write_config(tmp.path(), "m.json", &minimal());
    let single = tmp.path().join("single");
    assert_eq!(run(&cfg, &single, &[]).status.code(), Some(0));
    let o = bin().arg("analyze").arg(&single).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("analyze").arg(tmp.path().join("nothing")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = bin().arg("selftest").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
