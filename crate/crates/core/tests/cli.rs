use std::path::Path;
use std::process::{Command, Output};

fn omt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omt")).args(args).output().expect("binary runs")
}

fn write_data(dir: &Path) -> String {
    let path = dir.join("data.csv");
    std::fs::write(
        &path,
        "id,p1,p2\na,0.01,0.02\nb,0.3,0.04\nc,0.001,0.9\nd,bad,0.1\ne,0.02,0.026\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(omt(&[]).status.code(), Some(2));
    assert_eq!(omt(&["solve", "--alpha", "nope"]).status.code(), Some(2));
    assert_eq!(omt(&["solve", "--k", "2", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(omt(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn eval_holm_reports_power() {
    let out = omt(&["eval", "--procedure", "holm", "--theta-obj", "-2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let avg = v["avg_power"].as_f64().unwrap();
    assert!((avg - 0.5278).abs() < 1e-3, "{avg}");
}

#[test]
fn solve_then_apply_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("solve");
    let o = omt(&["solve", "--k", "2", "--error", "fwer", "--theta-obj", "-1", "--out", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let policy = out_dir.join("policy.json");
    assert!(policy.exists() && out_dir.join("report.json").exists());

    let data = write_data(dir.path());
    let args = ["apply", "--data", &data, "--procedures", "omt,holm,bh", "--policy", policy.to_str().unwrap()];
    let first = omt(&args);
    let second = omt(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    // Four good rows plus a header; the malformed one is reported on stderr.
    assert_eq!(text.lines().count(), 5, "{text}");
    assert!(String::from_utf8_lossy(&first.stderr).contains("skipped 1"));
}

#[test]
fn apply_needs_a_policy_for_omt() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let o = omt(&["apply", "--data", &data, "--procedures", "omt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn slice_writes_csv() {
    let o = omt(&["slice", "--procedure", "holm", "--u1", "0.005", "--n", "64"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# policy=holm"));
    assert_eq!(lines.next().unwrap(), "u2,u3,count");
    assert_eq!(lines.filter(|l| !l.is_empty()).count(), 64 * 64);
}
