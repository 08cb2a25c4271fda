use std::fs;

use hermite_fem::runner::{run_experiment, Levels, RunConfig, RunError};

fn config(experiment: &str, dir: &tempfile::TempDir) -> RunConfig {
    let mut c = RunConfig::new(experiment);
    c.out = dir.path().join("out");
    c
}

#[test]
fn exp1_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("exp1", &dir);
    c.levels = Some(Levels::Uniform(vec![2, 4]));
    c.save_meshes = true;
    let summary = run_experiment(&c).unwrap();
    assert_eq!(summary.levels.len(), 2);
    let errors = fs::read_to_string(c.out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 3);
    let info = fs::read_to_string(c.out.join("meshinfo.csv")).unwrap();
    assert!(info.starts_with("level,triangles,vertices,ndof\n"));
    assert!(c.out.join("mesh_1.txt").exists());
    assert!(!c.out.join("newton_0.csv").exists());
}

#[test]
fn hjb_run_writes_newton_history() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("exp3", &dir);
    c.levels = Some(Levels::Uniform(vec![2]));
    run_experiment(&c).unwrap();
    let hist = fs::read_to_string(c.out.join("newton_0.csv")).unwrap();
    assert!(hist.starts_with("iteration,increment_norm,residual_norm,controls_changed\n"));
    assert!(hist.lines().count() > 2);
}

#[test]
fn newton_budget_exhaustion_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("exp3", &dir);
    c.levels = Some(Levels::Uniform(vec![4]));
    c.max_iter = 1;
    let err = run_experiment(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn bad_configs_are_usage_errors_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cases = Vec::new();
    cases.push(config("exp9", &dir));
    let mut c = config("exp1", &dir);
    c.degree = 5;
    cases.push(c);
    let mut c = config("exp2", &dir);
    c.levels = Some(Levels::Uniform(vec![3]));
    cases.push(c);
    let mut c = config("exp1", &dir);
    c.eps_tilde = Some(0.9);
    cases.push(c);
    for c in cases {
        let err = run_experiment(&c).unwrap_err();
        assert!(matches!(err, RunError::Usage(_)), "{err}");
        assert!(!c.out.exists());
    }
}

#[test]
fn custom_problem_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "experiment = \"custom\"\nlevels = [2, 4]\nout = {:?}\n\n[custom]\na = [2.0, 0.5, 1.0]\nb = [1.0, 0.0]\nc = 1.0\nlambda = 1.0\n",
        dir.path().join("custom")
    );
    let c = RunConfig::from_toml_str(&text).unwrap();
    let summary = run_experiment(&c).unwrap();
    let e: Vec<f64> = summary.levels.iter().map(|l| l.errors.unwrap().h2_broken).collect();
    assert!(e[1] < 0.5 * e[0], "{e:?}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(RunConfig::from_toml_str("experiment = \"exp1\"\nlevel = [2]\n").is_err());
    assert!(RunConfig::from_toml_str("experiment = \"exp1\"\nlevels = \"graded:3\"\n").is_err());
    let c = RunConfig::from_toml_str("experiment = \"exp4\"\nlevels = { graded = 3 }\n").unwrap();
    assert_eq!(c.levels, Some(Levels::Graded { graded: 3, c: 120.0 }));
}
