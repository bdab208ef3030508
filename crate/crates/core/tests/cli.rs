//! Spawns the `sit` binary and checks exit codes and written files.

use std::path::Path;
use std::process::{Command, Output};

use sit_control::report::Table;

fn sit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sit"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn sit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn equilibria_prints_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(dir.path(), &["equilibria"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let u_star: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("U* = "))
        .unwrap()
        .parse()
        .unwrap();
    // within a quarter of the commonly quoted 9620
    assert!((u_star - 9620.0).abs() <= 0.25 * 9620.0, "U* = {u_star}");
    assert!(text.contains("Stable") && text.contains("Unstable"));
    assert!(dir.path().join("equilibria.csv").exists());
}

#[test]
fn plan_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(dir.path(), &["--plot", "plan", "--T", "200", "--Ubar", "5000", "--eps-frac", "0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert!(csv.starts_with("t,F,Ms,u\n"));
    let table = Table::from_csv(&csv).unwrap();
    let u = table.column("u").unwrap();
    assert_eq!(u[0], 0.0);
    assert_eq!(*u.last().unwrap(), 0.0);
    assert!(u.iter().any(|v| *v > 0.0));
    let svg = std::fs::read_to_string(dir.path().join("plan.svg")).unwrap();
    assert!(svg.contains("eps = 2759.25"));
    assert!(svg.contains("stroke-dasharray"));
}

#[test]
fn exported_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(dir.path(), &["simulate", "--model", "full", "--u", "pulse:20000:10:1.3", "--T", "30"]);
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("simulate.csv");
    let first = std::fs::read(&path).unwrap();
    assert!(first.starts_with(b"t,E,M,F,Ms,u\n"));
    let again = dir.path().join("again.csv");
    Table::read(&path).unwrap().write(&again).unwrap();
    assert_eq!(first, std::fs::read(&again).unwrap());
    // 61 half-day rows plus the pulse ends 1.3, 11.3 and 21.3
    let rows = Table::read(&path).unwrap().rows.len();
    assert_eq!(rows, 61 + 3);
}

#[test]
fn simulate_both_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(dir.path(), &["simulate", "--model", "both", "--u", "const:15000", "--T", "70"]);
    assert_eq!(o.status.code(), Some(0));
    let gap: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.split(" = ").nth(1).filter(|_| l.contains("gap")))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap < 0.05);
    let csv = std::fs::read_to_string(dir.path().join("simulate_both.csv")).unwrap();
    assert!(csv.starts_with("t,F_reduced,F_full,u\n"));
}

#[test]
fn infeasible_horizon_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(dir.path(), &["plan", "--T", "60"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too short"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["plan", "--bogus"],
        vec!["--set", "nope=1", "equilibria"],
        vec!["--set", "nu_E=abc", "equilibria"],
        vec!["--set", "nu_E=-1", "equilibria"],
        vec!["--params", "/nonexistent/params.toml", "equilibria"],
        vec!["simulate", "--u", "sometimes"],
        vec!["plan", "--eps", "1", "--eps-frac", "0.2"],
        vec!["plan", "--model", "both"],
    ] {
        let o = sit(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn parameter_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.toml");
    std::fs::write(&file, "nu_E = 0.25\nanchor = \"F_bar\"\nanchor_value = 5000\n").unwrap();
    let o = sit(dir.path(), &["--params", file.to_str().unwrap(), "equilibria"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("F_bar = 5000\n"));
}

#[test]
fn sweep_records_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = sit(
        dir.path(),
        &["sweep", "--T", "60", "--nu", "0.05,0.25", "--skip-full", "--grid", "60"],
    );
    // every planner row fails at T = 60 but the direct optimizer still runs
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("nu_E,J_plan,T_opt_plan,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plan:"));
}
