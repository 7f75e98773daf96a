use std::path::Path;
use std::process::{Command, Output};

fn fmtcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmtcheck")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_shipped_library() {
    let o = fmtcheck(&["constraints", "validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fmtcheck(&["--json", "constraints", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(serde_json::from_str::<serde_json::Value>(&stdout(&o)).is_ok());
}

fn forge(out: &Path, workers: &str) {
    let o = fmtcheck(&[
        "forge", "--level", "2", "--train", "40", "--test", "20", "--seed", "11", "--workers", workers, "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn forge_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    forge(&a, "1");
    forge(&b, "4");
    for f in ["train.jsonl", "test.jsonl", "stats.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(a.join("train.jsonl")).unwrap().lines().count(), 40);
}

#[test]
fn dpo_loss_at_zero_margin() {
    let o = fmtcheck(&["loss", "dpo", "--margin", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0.693147"), "{}", stdout(&o));
    let o = fmtcheck(&["loss", "sft", "--logprobs", "-0.5,-1.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("2.000000"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fmtcheck(&["forge", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(fmtcheck(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn operational_errors_exit_one() {
    let o = fmtcheck(&["constraints", "validate", "--library", "/nonexistent/lib.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn stub_round_trip_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    forge(d, "2");
    let test = d.join("test.jsonl");
    let out = d.join("eval");
    let o = fmtcheck(&[
        "eval", "--dataset", test.to_str().unwrap(), "--stub", "0.6", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["levels"]["2"]["n"], 20);
}
