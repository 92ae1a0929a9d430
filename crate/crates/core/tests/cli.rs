//! End-to-end runs of the `stochcl` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stochcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochcl")).args(args).output().expect("binary runs")
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> (Output, String) {
    let out: PathBuf = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let out_s = out.to_str().unwrap().to_string();
    full.extend(["--threads", "1", "--out", &out_s]);
    let o = stochcl(&full);
    let text = std::fs::read_to_string(&out).unwrap_or_default();
    (o, text)
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn zero_horizon_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = run_to(dir.path(), "s.csv", &["simulate", "--t-final", "0"]);
    assert!(o.status.success());
    assert_eq!(data_lines(&csv), vec!["t,energy,h1_seminorm,phi,linf"]);
}

#[test]
fn default_simulation_reaches_unit_time() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = run_to(dir.path(), "s.csv", &["simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 1 + 1024 / 64);
    assert!(rows.last().unwrap().starts_with("1,"));
    assert!(csv.contains("# n = 32") && csv.contains("alpha = 0.0316227766016838"));
    let gp = std::fs::read_to_string(dir.path().join("s.gp")).unwrap();
    assert!(gp.contains("'s.csv'"));
}

#[test]
fn fixed_seed_reproduces_and_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = run_to(dir.path(), "a.csv", &["simulate", "--seed", "7"]);
    let (_, b) = run_to(dir.path(), "b.csv", &["simulate", "--seed", "7"]);
    let (_, c) = run_to(dir.path(), "c.csv", &["simulate", "--seed", "8"]);
    assert_eq!(a, b);
    assert_ne!(data_lines(&a), data_lines(&c));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["weak-error", "--t-final", "2", "--replicas", "6", "--set", "dt_grid=[0.125,0.25]", "--set", "dt_ref=0.03125"];
    let (_, one) = run_to(dir.path(), "a.csv", &args);
    let out = dir.path().join("b.csv");
    let mut with4: Vec<&str> = args.to_vec();
    with4.extend(["--threads", "4", "--out", out.to_str().unwrap()]);
    assert!(stochcl(&with4).status.success());
    assert_eq!(one, std::fs::read_to_string(out).unwrap());
}

#[test]
fn echoed_header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, first) = run_to(dir.path(), "a.csv", &["simulate", "--seed", "3", "--n", "16", "--alpha", "0.5", "--t-final", "0.25"]);
    let config: String = first
        .lines()
        .skip(1)
        .take_while(|l| l.starts_with("# "))
        .map(|l| format!("{}\n", &l[2..]))
        .collect();
    let path = dir.path().join("echo.toml");
    std::fs::write(&path, config).unwrap();
    let (o, second) = run_to(dir.path(), "b.csv", &["simulate", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first, second);
}

#[test]
fn weak_error_has_one_row_per_regime_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = run_to(
        dir.path(),
        "w.csv",
        &["weak-error", "--t-final", "2", "--replicas", "3", "--set", "dt_grid=[0.0625,0.125,0.25]", "--set", "dt_ref=0.015625"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_lines(&csv);
    assert_eq!(rows[0], "alpha,dt,mean,std_error,ci_low,ci_high,analytic_value");
    assert_eq!(rows.len() - 1, 3 * 4);
    assert_eq!(csv.lines().filter(|l| l.starts_with("# slope")).count(), 4);
    assert!(!rows[1].ends_with(','), "alpha = 0 rows carry the analytic value");
    assert!(rows.last().unwrap().ends_with(','));
}

#[test]
fn ergodic_smoke_run_has_four_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = run_to(dir.path(), "e.csv", &["ergodic", "--t-final", "16"]);
    assert!(o.status.success());
    let rows = data_lines(&csv);
    let header: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(header.len(), 6);
    assert_eq!(header[0], "t");
    assert_eq!(header[5], "analytic");
    assert_eq!(rows.len() - 1, 16);
    assert!(rows[1].ends_with(",0.8927276141891252"));
}

#[test]
fn space_rate_reports_the_limit_and_strong_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = run_to(dir.path(), "r.csv", &["space-rate", "--set", "mc_replicas=2", "--set", "n_grid=[8,16]", "--t-final", "0.25"]);
    assert!(o.status.success());
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].contains(",0.6454972243679028,"));
    let (_, same) = run_to(dir.path(), "s.csv", &["space-rate", "--set", "mc_replicas=2", "--set", "n_grid=[8]", "--set", "refine_ratio=1"]);
    let cells: Vec<&str> = data_lines(&same)[1].split(',').collect();
    assert_eq!(cells[4], "0");
}

#[test]
fn analytic_table_lists_the_oracle_values() {
    let o = stochcl(&["analytic"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("phi_split,0.8927276141891252"));
    assert!(text.contains("w2_space_limit,0.6454972243679028"));
}

#[test]
fn selfcheck_passes_and_detects_a_flipped_sign() {
    let o = stochcl(&["selfcheck", "--set", "instances=100"]);
    assert_eq!(o.status.code(), Some(0));
    let table = String::from_utf8(o.stderr).unwrap();
    assert!(table.lines().filter(|l| l.contains(" pass ")).count() >= 10);
    let bad = stochcl(&["selfcheck", "--set", "instances=100", "--mutate-sign"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8(bad.stderr).unwrap().contains("l1_drift_contraction     FAIL"));
    let tie = stochcl(&["selfcheck", "--set", "instances=100", "--mutate-sign", "zero-negative", "--only", "l1_drift_contraction"]);
    assert_eq!(tie.status.code(), Some(0));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n = 16\nnu = \"fast\"\n").unwrap();
    let o = stochcl(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(stochcl(&["simulate", "--set", "typo=1"]).status.code(), Some(2));
    assert_eq!(stochcl(&["simulate", "--nu", "-1"]).status.code(), Some(2));
    assert_eq!(stochcl(&["simulate", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(stochcl(&["analytic", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let o = stochcl(&[
        "simulate",
        "--alpha",
        "50",
        "--dt",
        "0.5",
        "--set",
        "newton_max_iter=1",
        "--set",
        "initial=[{amp=20.0,m=1}]",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 0"));
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("state.bin");
    let (_, full) = run_to(dir.path(), "full.csv", &["simulate", "--seed", "4", "--t-final", "0.5"]);
    let (o, _) = run_to(
        dir.path(),
        "first.csv",
        &["simulate", "--seed", "4", "--t-final", "0.25", "--checkpoint", ck.to_str().unwrap()],
    );
    assert!(o.status.success());
    let (o, rest) = run_to(dir.path(), "rest.csv", &["simulate", "--seed", "4", "--t-final", "0.5", "--resume", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_lines(&full).last(), data_lines(&rest).last());
}
