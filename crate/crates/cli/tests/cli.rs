use std::path::{Path, PathBuf};
use std::process::Command;

use proxdyn_cli::run;
use proxdyn_cli::scenario::{self, ScenarioError, Task};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("proxdyn-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxdyn"))
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines().last().unwrap().split(',').take(3).map(|v| v.parse().unwrap()).collect()
}

#[test]
fn bundled_rotation_parses_as_simulation() {
    let sc = scenario::load(&scenarios().join("rotation_ball.scn")).unwrap();
    assert!(matches!(sc.task, Task::Simulate));
    assert_eq!(sc.set.dim(), 2);
}

#[test]
fn validation_errors_name_the_field() {
    let text = std::fs::read_to_string(scenarios().join("rotation_ball.scn")).unwrap();
    let outside = text.replace("initial 1 0", "initial 1.5 0");
    assert!(matches!(scenario::parse_scenario(&outside), Err(ScenarioError::Validation { field, .. }) if field == "initial"));
    let long_step = text.replace("h 1e-3", "h 7");
    assert!(matches!(scenario::parse_scenario(&long_step), Err(ScenarioError::Validation { field, .. }) if field == "integrator"));
    let missing = scenario::load(Path::new("/nonexistent/x.scn")).unwrap_err();
    assert!(matches!(missing, ScenarioError::Io { .. }));
    assert!(missing.to_string().contains("/nonexistent/x.scn"));
}

#[test]
fn every_bundled_scenario_parses() {
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn rotation_run_exits_zero_near_start() {
    let out = scratch("rotation");
    let status = bin().args(["run"]).arg(scenarios().join("rotation_ball.scn")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stdout));
    let last = last_row(&std::fs::read_to_string(out.join("trajectory.csv")).unwrap());
    assert!((last[1] - 1.0).abs() < 1e-2 && last[2].abs() < 1e-2, "{last:?}");
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.lines().filter(|l| l.starts_with("CHECK ")).all(|l| l.contains(": PASS margin=")));
}

#[test]
fn refuted_candidate_exits_two_with_witness() {
    let out = scratch("linear");
    let status = bin().args(["run"]).arg(scenarios().join("certify_linear.scn")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("CHECK certificate: FAIL margin=-1.000000e0"), "{report}");
    assert!(report.contains("witness (0.000000, -1.000000)"), "{report}");
}

#[test]
fn domain_guard_exits_two() {
    let sc = scenario::load(&scenarios().join("certify_segment.scn")).unwrap();
    let outcome = run::execute(&sc);
    assert!(matches!(outcome.error, Some(proxdyn::Error::DomainViolation(_))));
    assert_eq!(outcome.exit_code(), 2);
}

#[test]
fn line_observer_exits_zero_with_rate() {
    let sc = scenario::load(&scenarios().join("observe_line.scn")).unwrap();
    let outcome = run::execute(&sc);
    assert_eq!(outcome.exit_code(), 0, "{}", outcome.report(&sc));
    let rate = outcome.check("fitted rate").unwrap();
    assert!(rate.passed && rate.margin >= 0.0);
    assert!(outcome.artifact("observer.csv").unwrap().starts_with("t,e,bound,x1,xhat1\n"));
}

#[test]
fn identical_seeds_give_identical_bytes() {
    for name in ["certify_contraction.scn", "observe_shell.scn", "invariance_circle.scn"] {
        let sc = scenario::load(&scenarios().join(name)).unwrap();
        let (a, b) = (scratch("det-a"), scratch("det-b"));
        run::run(&sc, &a).unwrap();
        run::run(&sc, &b).unwrap();
        for entry in std::fs::read_dir(&a).unwrap() {
            let file = entry.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&file)).unwrap(), std::fs::read(b.join(&file)).unwrap(), "{name}: {file:?}");
        }
    }
}

#[test]
fn seed_override_is_reported() {
    let out = scratch("seed");
    let status = bin().args(["run"]).arg(scenarios().join("observe_ball.scn")).arg("--out").arg(&out).args(["--seed", "7"]).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("seed: 7\n"));
}

#[test]
fn batch_isolates_outputs() {
    let dir = scratch("batch-in");
    let out = scratch("batch-out");
    for name in ["rotation_ball.scn", "certify_linear.scn", "ndcs_ramp.scn"] {
        std::fs::copy(scenarios().join(name), dir.join(name)).unwrap();
    }
    let status = bin().arg("batch").arg(&dir).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("rotation_ball.scn exit 0") && stdout.contains("certify_linear.scn exit 2"), "{stdout}");
    for stem in ["rotation_ball", "certify_linear", "ndcs_ramp"] {
        assert!(out.join(stem).join("report.txt").exists());
    }
    assert!(out.join("ndcs_ramp").join("multipliers.csv").exists());
}

#[test]
fn convergence_command_overrides_steps() {
    let out = scratch("conv");
    let status = bin()
        .arg("convergence")
        .arg(scenarios().join("rotation_ball.scn"))
        .args(["--h-list", "1e-2", "5e-3", "2.5e-3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stdout));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let bad = bin().arg("convergence").arg(scenarios().join("rotation_ball.scn")).args(["--h-list", "1e-3", "1e-2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn parse_errors_exit_one() {
    let dir = scratch("bad");
    let path = dir.join("bad.scn");
    std::fs::write(&path, "name bad\nset {\n  kind ball\n").unwrap();
    let status = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stderr).contains("line 2"));
}
