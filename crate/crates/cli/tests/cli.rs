use std::path::Path;
use std::process::{Command, Output};

fn heatctl(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatctl"));
    cmd.args(args).env_remove("HEATCTL_OUT");
    if let Some(dir) = out_env {
        cmd.env("HEATCTL_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "u0.beta = 10\nmesh.nx = 8\nmesh.nt = 8\nforward.nx = 65\nforward.nt = 128\n";

#[test]
fn bad_value_exits_4_naming_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "u0.beta = 10\n# comment\nmesh.nx=banana\n");
    let o = heatctl(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mesh.nx") && err.contains(":3"), "{err}");
}

#[test]
fn unknown_key_and_missing_file_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), SMALL);
    let o = heatctl(&["run", "--config", &cfg, "--set", "mesh.ny=3"], None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh.ny"));
    let o = heatctl(&["run", "--config", "/nonexistent/x.cfg"], None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn missing_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "mesh.nx = 8\nmesh.nt = 8\n");
    let o = heatctl(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("u0.beta"));
}

#[test]
fn zero_nonlinearity_converges_at_once_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{SMALL}g.kind = zero\n"));
    let out = dir.path().join("o");
    let o = heatctl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,rel_dy,rel_df,norm_y,norm_f,sqrt2E,lambda");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,,,"));
    assert!(lines[1].contains(",0.000000e0,"));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("status: converged"));
    assert_eq!(std::fs::read_to_string(out.join("records.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn env_sets_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{SMALL}g.kind = zero\noutput.dir = {}\n", dir.path().join("cfgdir").display()));
    let env_dir = dir.path().join("envdir");
    let o = heatctl(&["run", "--config", &cfg], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("table.csv").exists());
    assert!(!dir.path().join("cfgdir").exists());
    let flag_dir = dir.path().join("flagdir");
    let o = heatctl(&["run", "--config", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("table.csv").exists());
}

#[test]
fn table_reemits_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{SMALL}run.max_iters = 2\n"));
    let out = dir.path().join("o");
    let o = heatctl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(matches!(o.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(out.join("table.csv")).unwrap();
    std::fs::remove_file(out.join("table.csv")).unwrap();
    let o = heatctl(&["table", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("table.csv")).unwrap(), first);
}

#[test]
fn table_without_records_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatctl(&["table", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn maxiter_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{SMALL}run.max_iters = 1\nrun.epsilon = 1e-300\n"));
    let o = heatctl(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_flags_corrupted_weights() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatctl(
        &["check", "--set", "weights.m=0.5", "--set", "forward.nx=65", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_ne!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("FAIL weights.beta_positive")), "{text}");
}

#[test]
fn help_lists_every_key() {
    let o = heatctl(&["--help"], None);
    let text = String::from_utf8_lossy(&o.stdout);
    for key in ["u0.beta", "mesh.nt", "weights.s", "run.variant", "forward.scheme", "HEATCTL_OUT"] {
        assert!(text.contains(key), "{key} missing from help");
    }
}
