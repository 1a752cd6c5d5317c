//! End-to-end checks of the `modescatter` binary: exit codes, validation
//! output, and artifact persistence.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modescatter"))
}

fn write_pair(dir: &Path, scenario: &str, config: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("scenario.json"), scenario).unwrap();
    let p = dir.join("config.json");
    std::fs::write(&p, config).unwrap();
    p
}

const ZERO_CONTRAST: &str =
    r#"{"preset":"zero_contrast_grating","alpha":0.3,"t":1.0,"t_prime":3.0,"n1":16,"h2":0.05}"#;

#[test]
fn validate_reports_resolved_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_pair(
        tmp.path(),
        ZERO_CONTRAST,
        r#"{"scenario":"scenario.json","kind":"flux_audit","k_grid":{"lo":1.5,"hi":1.6,"count":3}}"#,
    );
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("m_max = 11"), "{text}");
}

#[test]
fn run_writes_manifest_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_pair(
        tmp.path(),
        ZERO_CONTRAST,
        r#"{"scenario":"scenario.json","kind":"flux_audit","k_grid":{"values":[1.6]},"m_max":5}"#,
    );
    let out_dir = tmp.path().join("results");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--threads")
        .arg("2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("metrics.json").exists());
    assert!(out_dir.join("flux.csv").exists());
    assert!(out_dir.join("flux.gp").exists());
}

#[test]
fn threshold_collision_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_pair(
        tmp.path(),
        ZERO_CONTRAST,
        r#"{"scenario":"scenario.json","kind":"flux_audit","k_grid":{"values":[1.3]}}"#,
    );
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("threshold"), "{err}");
}

#[test]
fn missing_config_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("run").arg(tmp.path().join("absent.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_audit_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    // Deliberately coarse grid: the trace-identity residual exceeds its
    // tolerance and the audit gate must trip.
    let cfg = write_pair(
        tmp.path(),
        r#"{"preset":"smooth_eps_grating","alpha":0.3,"t":1.0,"t_prime":4.0,"n1":32,"h2":0.1}"#,
        r#"{"scenario":"scenario.json","kind":"lemma1_audit","k_grid":{"values":[1.6]},"seed":7}"#,
    );
    let out_dir = tmp.path().join("results");
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    // Metrics are still written on audit failure.
    assert!(out_dir.join("metrics.json").exists());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    let residual = metrics["lemma1_residual_max"].as_f64().unwrap();
    if residual > 2e-2 {
        assert_eq!(out.status.code(), Some(1), "audit should have failed");
    } else {
        assert!(out.status.success());
    }
}
