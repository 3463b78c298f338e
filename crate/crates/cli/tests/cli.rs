use std::path::Path;
use std::process::{Command, Output};

fn jkoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jkoflow")).args(args).output().expect("spawn jkoflow")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = jkoflow(&["heat-equation"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("heat-equation"));
}

#[test]
fn missing_argument_and_bad_flag_are_usage_errors() {
    assert_eq!(jkoflow(&[]).status.code(), Some(2));
    assert_eq!(jkoflow(&["bw-rotation", "--seed", "minus-one"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    for text in ["etas =\n", "substeps = 0\n", "no_such_key = 1\n", "t_end = 1\nt_end = 2\n", "what is this\n"] {
        let cfg = config(dir.path(), text);
        let res = jkoflow(&["riemannian-order", "--config", &cfg, "--out", out]);
        assert_eq!(res.status.code(), Some(2), "config {text:?}");
    }
    let missing = dir.path().join("absent.cfg");
    let res = jkoflow(&["bw-rotation", "--config", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn passing_run_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rot");
    let res = jkoflow(&["bw-rotation", "--seed", "3", "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("#   seed = 3"));
    assert!(stdout.lines().any(|l| l.starts_with("PASS C2-")));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary, stdout);
    assert!(out.join("correction_identity.csv").is_file());
}

#[test]
fn failed_criterion_exits_1_only_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "etas = 0.25, 0.125, 0.0625\nsteps_per_eta = 20\n");
    let out = dir.path().join("bw");
    let out = out.to_str().unwrap();
    let checked = jkoflow(&["bw-scaling", "--config", &cfg, "--out", out, "--check"]);
    assert_eq!(checked.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&checked.stdout).contains("FAIL C1-"));
    let plain = jkoflow(&["bw-scaling", "--config", &cfg, "--out", out]);
    assert_eq!(plain.status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(jkoflow(&["bw-rotation", "--seed", seed, "--out", out.to_str().unwrap()]).status.success());
        std::fs::read(out.join("correction_identity.csv")).unwrap()
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("a", "9"), run("c", "10"));
}
