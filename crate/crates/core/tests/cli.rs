use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellipsoid-cp"))
        .args(args)
        .env_remove("ELLIPSOID_CP_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
    "data": {"simulate": {"process": "var", "dim": 2, "order": 2, "n_train": 500, "n_test": 120}},
    "methods": ["multidim_spci", "coordwise_spci"],
    "trials": 2,
    "engine": {
        "quantile": {"engine": "qrf", "window": 10, "refit_stride": 10},
        "forecast": {"lags": {"lag_order": 2}}
    }
}"#;

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_str = out.to_str().unwrap();
    let o = cli(&["run", "--config", &config, "--seed", "3", "--out", out_str]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("multidim_spci") && stdout.contains("coordwise_spci"));
    for f in ["summary.json", "rolling.csv", "regions.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let r = cli(&["report", "--out", out_str]);
    assert!(r.status.success());
    let records: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["trials"], 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut bytes = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = cli(&["--threads", threads, "run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        bytes.push(std::fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn simulate_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("sim");
    let o = cli(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 620);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"data": {"simulate": {"process": "ar", "dim": 2, "order": 2}}, "methods": ["copula"], "bogus": 1}"#);
    let o = cli(&["run", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let config = write_config(
        dir.path(),
        r#"{"data": {"simulate": {"process": "ar", "dim": 6, "order": 2}}, "methods": ["hull"]}"#,
    );
    let o = cli(&["run", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_ellipsoid-cp"))
        .args(["run", "--config", &config])
        .env("ELLIPSOID_CP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"data": {"csv": {"path": "missing.csv", "columns": ["a", "b"]}}, "methods": ["multidim_spci"]}"#,
    );
    let o = cli(&["run", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(dir.path().join("missing.csv"), "a,b\n1,2\nx,3\n").unwrap();
    let o = cli(&["run", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}
