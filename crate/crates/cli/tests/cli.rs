use std::path::PathBuf;
use std::process::{Command, Output};

fn ellqg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellqg")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ellqg-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_exit_codes() {
    assert_eq!(ellqg(&["verify", "rmat"]).status.code(), Some(0));
    assert_eq!(ellqg(&["verify", "nope"]).status.code(), Some(2));
    assert_eq!(ellqg(&["--break-shift", "verify", "gt"]).status.code(), Some(1));
    assert_eq!(ellqg(&["--break-shift", "verify", "rmat"]).status.code(), Some(0));
    assert_eq!(ellqg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ellqg(&["--jobs", "0", "verify", "rmat"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let a = ellqg(&["--seed", "7", "verify", "all"]);
    let b = ellqg(&["--seed", "7", "--jobs", "1", "verify", "all"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = ellqg(&["--seed", "8", "verify", "all"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn rmat_json_shape() {
    let out = ellqg(&["rmat", "--z", "0.8+0.1i"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["N"], 3);
    let entries = v["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        let (i, o) = (e["in"].as_array().unwrap(), e["out"].as_array().unwrap());
        let mut a = vec![i[0].as_u64(), i[1].as_u64()];
        let mut b = vec![o[0].as_u64(), o[1].as_u64()];
        a.sort();
        b.sort();
        assert_eq!(a, b, "ice rule: {e}");
    }
}

#[test]
fn csv_and_out_file() {
    let path = tmp("grid.csv");
    let out = ellqg(&["--format", "csv", "--out", path.to_str().unwrap(), "qkz", "grid", "--trig", "--m0", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t1_re,t1_im,t2_re,t2_im,t3_re,t3_im,re,im");
    assert_eq!(lines.count(), 64);
    assert_eq!(ellqg(&["--format", "csv", "wf", "stab"]).status.code(), Some(2));
}

#[test]
fn bad_configs_exit_2() {
    let missing = tmp("missing.json");
    std::fs::write(&missing, r#"{"q": 0.5, "r": 3.1, "k": 0.7, "N": 2, "n": 2, "lambda": [1, 1], "P": [1.7]}"#).unwrap();
    let out = ellqg(&["--config", missing.to_str().unwrap(), "verify", "rmat"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`z`"));

    let bad_q = tmp("bad_q.json");
    std::fs::write(
        &bad_q,
        r#"{"q": 1.5, "r": 3.1, "k": 0.7, "N": 2, "n": 2, "lambda": [1, 1], "P": [1.7], "z": [0.8, "0.9i"]}"#,
    )
    .unwrap();
    let out = ellqg(&["--config", bad_q.to_str().unwrap(), "theta"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`q`"));

    assert_eq!(ellqg(&["--config", "/nonexistent.json", "theta"]).status.code(), Some(2));
}

#[test]
fn usage_errors_in_arguments() {
    assert_eq!(ellqg(&["wf", "eval", "--colors", "1,1,1"]).status.code(), Some(2));
    assert_eq!(ellqg(&["qkz", "eval", "--trig", "--cycle", "1,2,3"]).status.code(), Some(2));
    assert_eq!(ellqg(&["gt", "act", "--op", "phi", "--j", "1", "--colors", "1,2,3"]).status.code(), Some(2));
}

#[test]
fn gt_and_wf_commands_run() {
    for args in [
        &["theta", "--u", "0.3+0.1i"][..],
        &["wf", "eval", "--colors", "2,1,3", "--at", "2,1,3"],
        &["wf", "triangularity"],
        &["wf", "transition"],
        &["gt", "basis"],
        &["gt", "act", "--op", "f", "--j", "2", "--colors", "1,2,3"],
        &["qkz", "eval"],
        &["qkz", "eval", "--cycle", "2,1,3"],
    ] {
        let out = ellqg(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap();
    }
}
