use std::process::Command;

fn dsts() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsts"))
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"problem": "dtlz2", "policy": {"name": "random", "q": 2}, "n_iterations": 5, "n_replications": 3, "seed": 9,
            "noise": {"lambda": [0.01, 0.01]}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = dsts()
        .args(["run", "--config", config.to_str().unwrap(), "--workers", "2", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    for rep in 0..3 {
        assert!(out.join(format!("rep_{rep:03}.jsonl")).exists());
    }

    std::fs::remove_file(out.join("summary.csv")).unwrap();
    let status = dsts().args(["summarize", "--in", out.to_str().unwrap()]).status().unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap(), csv);

    std::fs::remove_file(out.join("rep_001.jsonl")).unwrap();
    let status = dsts().args(["summarize", "--in", out.to_str().unwrap()]).status().unwrap();
    assert!(!status.success());
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"problem": "dtlz2", "policy": {"name": "dsts", "q": 1}}"#).unwrap();
    let out = dsts().args(["run", "--config", config.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("q must be at least 2"));
}

#[test]
fn calibrate_reports_scales() {
    let out = dsts().args(["calibrate", "--problem", "dtlz2", "--seed", "4"]).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["lambda"].as_array().unwrap().len(), 2);
    for r in report["fresh_rate"].as_array().unwrap() {
        assert!((r.as_f64().unwrap() - 0.2).abs() < 0.02);
    }
}
