use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_elaa-isac"))
}

#[test]
fn solve_prints_json_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = bin().args(["solve", "--seed", "3", "--trace"]).arg(&trace).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["feasible"], true);
    assert!(std::fs::read_to_string(trace).unwrap().starts_with("iteration,"));
}

#[test]
fn run_writes_tables_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, elaa_isac::SystemConfig::default().to_json()).unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .args(["run", "power_vs_S", "--seeds", "0..1", "--workers", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["power_vs_S.csv", "power_vs_S_runs.csv", "power_vs_S_manifest.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "fig9", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
    let out = bin().args(["run", "convergence", "--seeds", "4..2", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = bin().args(["solve", "--config", "/nonexistent.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}
