use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hermite-fem"))
}

#[test]
fn runs_exp1_and_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--experiment", "exp1", "--levels", "2,4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("level"));
    assert!(dir.path().join("errors.csv").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"exp1\"\nlevels = [2, 4, 8]\ndegree = 3\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--levels", "2", "--degree", "4", "--out"])
        .arg(dir.path().join("res"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let info = std::fs::read_to_string(dir.path().join("res/meshinfo.csv")).unwrap();
    assert_eq!(info.lines().count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).arg("--out").arg(dir.path().join("x")).output().unwrap().status.code();
    assert_eq!(code(&["--experiment", "exp9"]), Some(1));
    assert_eq!(code(&["--bogus"]), Some(1));
    assert_eq!(code(&[]), Some(1));
    assert_eq!(code(&["--experiment", "exp1", "--degree", "2"]), Some(1));
    assert!(!dir.path().join("x").exists());
    assert_eq!(code(&["--experiment", "exp3", "--levels", "4", "--max-iter", "1"]), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}
