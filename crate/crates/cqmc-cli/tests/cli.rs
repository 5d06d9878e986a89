//! End-to-end smoke tests for the `cqmc` binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cqmc"))
}

#[test]
fn run_writes_reports() {
    let dir = std::env::temp_dir().join("cqmc-cli-run");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("report.csv");
    let svg = dir.join("report.svg");
    let output = bin()
        .args([
            "run",
            "--example",
            "binary",
            "--d",
            "1",
            "--smoothing",
            "cond:first",
            "--n",
            "8..9",
            "--reps",
            "2",
            "--seed",
            "7",
            "--out",
            csv.to_str().unwrap(),
            "--plot",
            svg.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("fitted slope"), "stdout: {stdout}");
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("n,mean_abs_error,rmse,stderr\n"));
    assert_eq!(csv_text.lines().count(), 3);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = std::env::temp_dir().join("cqmc-cli-config");
    std::fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("study.conf");
    std::fs::write(
        &conf,
        "example = binary\nd = 1\nsmoothing = cond:first\nn = 8..9\nreps = 2\nseed = 7\n",
    )
    .unwrap();
    let from_file = bin()
        .args(["run", "--config", conf.to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert!(from_file.status.success());
    let file_stdout = String::from_utf8_lossy(&from_file.stdout).to_string();
    assert!(file_stdout.contains("reference ="));

    // A flag overrides the file.
    let overridden = bin()
        .args(["run", "--config", conf.to_str().unwrap(), "--reps", "3"])
        .output()
        .expect("binary runs");
    assert!(overridden.status.success());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reference_prints_provenance() {
    let output = bin()
        .args(["reference", "--example", "binary", "--d", "1"])
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("quadrature cross-checked"), "stdout: {stdout}");
}

#[test]
fn bad_flags_fail_cleanly() {
    let output = bin()
        .args(["run", "--example", "swaption", "--d", "4"])
        .output()
        .expect("binary runs");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown example"));
}
