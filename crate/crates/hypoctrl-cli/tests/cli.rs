use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypoctrl"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn analyze_kfp_reports_k0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"command": "analyze", "preset": "kfp", "a": 1.0}"#);
    let out = bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = fs::read_to_string(dir.path().join("analysis.json")).unwrap();
    assert!(doc.contains("\"k0\": 1"), "{doc}");
}

#[test]
fn runs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"command": "analyze", "preset": "kolmogorov"}"#);
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    for out in [&out1, &out2] {
        let st = bin()
            .args(["analyze", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .arg("--seed")
            .arg("3")
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = fs::read(out1.join("analysis.json")).unwrap();
    let b = fs::read(out2.join("analysis.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn schema_violation_exits_2_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.json",
        r#"{"command": "analyze", "preset": "heat", "bogus": 1}"#,
    );
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/bogus"), "{err}");
}

#[test]
fn command_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"command": "evolve", "preset": "kolmogorov"}"#);
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", "{nope");
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_preset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"command": "analyze", "preset": "warp"}"#);
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_exits_4() {
    let out = bin()
        .args(["analyze", "--config", "/nonexistent/cfg.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn cost_command_reports_cubic_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"command": "cost", "params": {"c1": 1.0, "c2": 1.0, "a": 0.5, "b": 1.0, "m": 3.0, "t0": 1.0}}"#,
    );
    let out = bin()
        .args(["cost", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = fs::read_to_string(dir.path().join("cost.json")).unwrap();
    assert!(doc.contains("\"exponent\": 3.0"), "{doc}");
}

#[test]
fn chain_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ch.json",
        r#"{"command": "chain", "chain": {"a": 2.0, "b": 2.0, "c": 1.0, "alpha": 1.0, "alpha1": 1.0, "alpha2": 1.0}}"#,
    );
    let out = bin()
        .args(["chain", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("chain.json").exists());
}
