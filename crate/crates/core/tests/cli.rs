use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ptsdim::config::{parse_csv, RunManifest, CSV_HEADER};

const SMALL: &str = r#"
[system]
n_u = 2
n_tx = 8
n_rx = 2
n_s = 4
n_a = 2
modulation = "qpsk"

[sweep]
snr_db = [4.0, 10.0]
min_bit_errors = 50
max_symbols = 400
seed = 3

[[curve]]
label = "direct"
mode = "direct"

[[curve]]
label = "aar"
mode = "aar"
n_on = 6
q_max = 20
"#;

fn ptsdim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptsdim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "[system]\nn_u = \"two\"\n");
    let out_csv = dir.path().join("out.csv");
    let out = ptsdim(&["simulate", "--config", &cfg, "--output", out_csv.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn dimension_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dims.cfg", &SMALL.replace("n_tx = 8", "n_tx = 3"));
    let out_csv = dir.path().join("out.csv");
    let out = ptsdim(&["simulate", "--config", &cfg, "--output", out_csv.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_tx"));
    assert!(!out_csv.exists());
}

#[test]
fn missing_config_file_is_an_error() {
    let out = ptsdim(&["flops", "--config", "/nonexistent/x.cfg"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn simulate_writes_csv_per_curve_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let base = dir.path().join("run.csv");
    let out = ptsdim(&["simulate", "--config", &cfg, "--output", base.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["direct", "aar"] {
        let text = fs::read_to_string(dir.path().join(format!("run.{label}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|(_, ber)| (0.0..=1.0).contains(ber)));
    }
    let manifest =
        RunManifest::from_json(&fs::read_to_string(dir.path().join("run.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.curves.len(), 2);
}

#[test]
fn seed_override_reproduces_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let run = |name: &str, seed: &str, workers: &str| {
        let base = dir.path().join(name);
        let out = ptsdim(&[
            "simulate", "--config", &cfg, "--output", base.to_str().unwrap(),
            "--seed", seed, "--workers", workers, "--quiet",
        ]);
        assert!(out.status.success());
        let stem = name.trim_end_matches(".csv");
        let m = fs::read_to_string(dir.path().join(format!("{stem}.manifest.json"))).unwrap();
        RunManifest::from_json(&m).unwrap()
    };
    let a = run("a.csv", "77", "1");
    let b = run("b.csv", "77", "3");
    let c = run("c.csv", "78", "1");
    assert_eq!(a.seed, 77);
    for (x, y) in a.curves.iter().zip(&b.curves) {
        assert_eq!(x.records, y.records);
    }
    assert_ne!(a.curves[0].records, c.curves[0].records);
}

#[test]
fn flops_matches_reference_values() {
    let cfg = configs_dir().join("fig2.cfg");
    let out = ptsdim(&["flops", "--config", cfg.to_str().unwrap(), "--n-on", "80", "--q", "100"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("min_power_flops 618105"), "{text}");
    assert!(text.contains("4318830"), "{text}");
    let ratio = text
        .lines()
        .find(|l| l.starts_with("ratio["))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap();
    assert_eq!(ratio, 6.98721);
}

#[test]
fn flops_with_zero_iterations_is_finite() {
    let cfg = configs_dir().join("fig2.cfg");
    let out = ptsdim(&["flops", "--config", cfg.to_str().unwrap(), "--q", "0", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for a in v["aar"].as_array().unwrap() {
        assert_eq!(a["q"], 0);
        assert!(a["flops"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn flops_without_aar_curve_needs_overrides() {
    let cfg = configs_dir().join("fig4_qpsk.cfg");
    let out = ptsdim(&["flops", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = ptsdim(&["flops", "--config", cfg.to_str().unwrap(), "--n-on", "200", "--q", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_json_reports_all_checks() {
    let out = ptsdim(&["validate", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"bd_nulling"));
    assert!(names.contains(&"soft_threshold_identities"));
}
