//! Command-line behaviour: outputs, exit codes, validation messages.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use randswitch::scenario::{load_scenario, parse_scenario, ScenarioError};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_randswitch"));
    c.env_remove("RANDSWITCH_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn example_text() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/example1_semimarkov.toml")).unwrap()
}

fn write_variant(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = example_text();
    assert!(text.contains(from), "{from}");
    let p = dir.join("variant.toml");
    fs::write(&p, text.replace(from, to)).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn criteria_reports_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["criteria", "--scenario", "example1_semimarkov"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("value -1.0901"), "{}", stdout(&o));
    assert!(stdout(&o).contains("exponential rate bound: -0.5450"));
    let csv = fs::read_to_string(dir.path().join("criteria.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# randswitch"));
    assert_eq!(lines.next().unwrap(), "criterion,mode,kind,bound,mu,weight,term,value,verdict");
    assert!(lines.all(|l| l.starts_with("S4,") && l.ends_with(",certified")));

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["criteria", "--scenario", "example1_markov", "--bounds", "paper"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("value -4.0177"));
}

#[test]
fn every_csv_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--scenario", "example1_semimarkov", "--seed", "11", "--horizon", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let scn = load_scenario("example1_semimarkov").unwrap();
    for name in ["path.csv", "trajectory.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains(&scn.sha256) && first.contains("seed=11"), "{name}: {first}");
        assert!(!text.contains('\r'));
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed: 11") && manifest.contains(&scn.sha256));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let read = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["simulate", "--scenario", "example1_semimarkov", "--seed", seed, "--horizon", "5"], dir.path());
        assert!(o.status.success());
        (
            fs::read(dir.path().join("path.csv")).unwrap(),
            fs::read(dir.path().join("trajectory.csv")).unwrap(),
        )
    };
    assert_eq!(read("7"), read("7"));
    assert_ne!(read("7").0, read("8").0);
}

#[test]
fn trajectory_starts_at_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--scenario", "example1_semimarkov", "--horizon", "1", "--step", "0.01"], dir.path());
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "t,mode,x1,x2,norm");
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(&first[..4], &[0.0, 1.0, 1.0, -1.0]);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
}

#[test]
fn row_sum_error_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_variant(dir.path(), "[0.7, 0.0, 0.3]", "[0.7, 0.0, 0.2]");
    let o = run(&["criteria", "--scenario", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("switching.P[1]"), "{}", stderr(&o));
}

#[test]
fn undeclared_state_variable_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_variant(dir.path(), "\"-2*x1 + x2\"", "\"-2*x1 + x3\"");
    let o = run(&["simulate", "--scenario", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("modes[0].field[0]") && err.contains("x3"), "{err}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["criteria", "--scenario", "example1_semimarkov", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["criteria", "--scenario", "example1_semimarkov", "--bounds", "guessed"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["criteria", "--scenario", "no-such-scenario"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["ensemble", "--scenario", "example1_semimarkov", "--reps", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--scenario", "example1_semimarkov", "--step", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

#[test]
fn out_defaults_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = bin()
        .args(["criteria", "--scenario", "example1_semimarkov"])
        .env("RANDSWITCH_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("criteria.csv").is_file());
}

#[test]
fn equilibrium_violation_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_variant(dir.path(), "\"-2*x1 + x2\"", "\"-2*x1 + x2 + 1\"");
    let o = run(&["criteria", "--scenario", p.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: mode 1"), "{}", stderr(&o));
}

#[test]
fn check_lyapunov_writes_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-lyapunov", "--scenario", "example1_semimarkov"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("PASS sandwich") && text.contains("PASS jump") && text.contains("FAIL derivative (mode 2)"));
    let csv = fs::read_to_string(dir.path().join("violations.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("derivative (mode 2),2,,")));
}

#[test]
fn ensemble_writes_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ensemble", "--scenario", "example1_markov", "--reps", "4", "--horizon", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 2 + 4);
    let occ = fs::read_to_string(dir.path().join("occupancy.csv")).unwrap();
    assert_eq!(occ.lines().nth(1).unwrap(), "t,occ_1,occ_2,occ_3,max_error");
    let ms = fs::read_to_string(dir.path().join("mean_square.csv")).unwrap();
    assert_eq!(ms.lines().last().unwrap().split(',').next().unwrap(), "3");
}

#[test]
fn builtin_scenarios_load() {
    for name in ["example1_semimarkov", "example1_markov", "example1_markov.toml"] {
        let s = load_scenario(name).unwrap();
        assert_eq!(s.mode_count(), 3);
        assert_eq!(s.sha256.len(), 64);
    }
    let from_file =
        load_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/example1_semimarkov.toml").to_str().unwrap())
            .unwrap();
    assert_eq!(from_file.sha256, load_scenario("example1_semimarkov").unwrap().sha256);
}

#[test]
fn malformed_documents_are_rejected() {
    assert!(matches!(parse_scenario("name = "), Err(ScenarioError::Syntax(_))));
    let text = example_text();
    for (from, to, field) in [
        ("dimension = 2", "dimension = 0", "dimension"),
        ("mu = 2.0", "mu = 0.5", "modes[1].mu"),
        ("high = 4.5", "high = 1.0", "switching.dwell[1]"),
        ("x0 = [1.0, -1.0]", "x0 = [1.0]", "sim.x0"),
    ] {
        assert!(text.contains(from), "{from}");
        match parse_scenario(&text.replacen(from, to, 1)) {
            Err(ScenarioError::Invalid { field: f, .. }) => assert!(f.starts_with(field), "{f} vs {field}"),
            other => panic!("{from} -> {to}: {other:?}"),
        }
    }
}
