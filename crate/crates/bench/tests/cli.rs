use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bench"))
}

#[test]
fn run_writes_outputs_and_grid_check() {
    let dir = tempfile::tempdir().unwrap();
    let status = bench()
        .args(["run", "--trials", "3", "--horizon", "10", "--seed", "5", "--grid-check", "--out"])
        .arg(dir.path())
        .env("BENCH_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["trials.csv", "summary.csv", "errors.svg", "grid_check.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        vec!["run", "--model", "lorenz"],
        vec!["run", "--methods", "amp,ukf"],
        vec!["run", "--trials", "0"],
        vec!["run", "--horizon", "0"],
    ] {
        let status = bench().args(&args).status().unwrap();
        assert_eq!(status.code(), Some(2), "{args:?}");
    }
    let status = bench()
        .args(["run", "--trials", "1", "--horizon", "4"])
        .env("BENCH_THREADS", "zero")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_three() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let status = bench()
        .args(["run", "--trials", "1", "--horizon", "4", "--out"])
        .arg(file.path().join("sub"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn validate_passes() {
    let out = bench().arg("validate").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
}
