//! Study runner: configuration parsing, reproducible reports and the
//! properties each study checks.

mod common;

use std::path::Path;

use common::*;
use gridharden_core::hardening::Mode;
use gridharden_core::study::{relative_vm_difference, run_study, RunConfig, StudyError, StudyKind, TreeKind};

fn small(study: StudyKind) -> RunConfig {
    let mut cfg = feeder_config();
    cfg.study = study;
    cfg.horizon = 4;
    cfg.tree.source_scenarios = 12;
    cfg.tree.scenarios = 4;
    cfg.tree.seed = 5;
    cfg.budgets.ug = vec![20e6, 30e6, 40e6];
    cfg
}

#[test]
fn toml_round_trip_and_relative_paths() {
    let text = r#"
study = "budget-sweep"
horizon = 6
modes = ["ts"]

[paths]
network = "net.json"
hazard = "/abs/hazard.csv"

[budgets]
ug = [1e6, 2e6]
vm = 5

[tree]
kind = "full"
branching = 3
scenarios = 5
pruning = "forward"
"#;
    let cfg = RunConfig::from_toml(text, Path::new("/base")).unwrap();
    assert_eq!(cfg.study, StudyKind::BudgetSweep);
    assert_eq!(cfg.modes, vec![Mode::Ts]);
    assert_eq!(cfg.paths.network.as_deref(), Some(Path::new("/base/net.json")));
    assert_eq!(cfg.paths.hazard.as_deref(), Some(Path::new("/abs/hazard.csv")));
    assert_eq!(cfg.tree.kind, TreeKind::Full);
    assert_eq!(cfg.budgets.vm, 5.0);
    assert_eq!(cfg.economics.c_ens, 10_000.0);
}

#[test]
fn config_errors_are_input_errors() {
    let base = Path::new(".");
    for text in [
        "unknown_key = 1",
        "study = \"nope\"",
        "horizon = 0",
        "[budgets]\nug = []",
        "[budgets]\nug = [-1.0]",
        "modes = []",
        "[solver]\ngap = -1.0",
        "[tree]\nscenarios = 0",
        "[economics]\nc_ens = -5.0",
        "[hazard_params]\nmean_days = [1.0, 1.0, 0.0]\nsigma = [0.5, 0.5, 0.5]\nrate0 = [1.0, 1.0, 1.0]\ntrend = [0.0, 0.0, 0.0]",
    ] {
        match RunConfig::from_toml(text, base) {
            Err(e) => assert!(e.is_input_error() || matches!(e, StudyError::Tree(_)), "{text}: {e}"),
            Ok(_) => panic!("accepted {text:?}"),
        }
    }
    let missing = RunConfig::load(Path::new("/nonexistent/config.toml")).unwrap_err();
    assert!(missing.is_input_error());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let inputs = feeder_inputs();
    let cfg = small(StudyKind::TsVsAts);
    let a = run_study(&cfg, &inputs).unwrap().to_json();
    let b = run_study(&cfg, &inputs).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn ts_vs_ats_and_budget_sweep_checks_hold() {
    let inputs = feeder_inputs();
    for study in [StudyKind::TsVsAts, StudyKind::BudgetSweep, StudyKind::StrategyAblation, StudyKind::HazardAblation] {
        let report = run_study(&small(study), &inputs).unwrap();
        assert!(!report.checks.is_empty(), "{study:?}");
        for c in &report.checks {
            assert!(c.holds, "{study:?}: {} violated", c.name);
        }
        assert_eq!(report.table.rows.len(), 3, "{study:?}");
    }
}

#[test]
fn outputs_are_written() {
    let inputs = feeder_inputs();
    let mut cfg = small(StudyKind::Single);
    cfg.budgets.ug = vec![25e6];
    let report = run_study(&cfg, &inputs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = report.write_outputs(dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["report.json", "single.csv", "single.txt", "timings.csv"]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(json["study"], "single");
    assert_eq!(json["runs"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(&files[1]).unwrap();
    assert!(csv.starts_with("mode,budget,nodes,v,ug_lines,vm_cost,time_s\n"));
}

#[test]
fn solver_limits_surface_with_partial_report() {
    let inputs = feeder_inputs();
    let mut cfg = small(StudyKind::TsVsAts);
    cfg.horizon = 6;
    cfg.tree.scenarios = 8;
    cfg.tree.source_scenarios = 20;
    cfg.solver.node_limit = Some(1);
    cfg.solver.gap = 0.0;
    let failure = run_study(&cfg, &inputs).unwrap_err();
    assert!(failure.error.is_solver_limit(), "{}", failure.error);
    assert!(failure.partial.error.is_some());
}

#[test]
fn tree_size_and_pruning_studies_run() {
    let inputs = feeder_inputs();
    let mut cfg = small(StudyKind::TreeSize);
    cfg.tree_size.scenario_counts = vec![2, 4];
    let report = run_study(&cfg, &inputs).unwrap();
    assert_eq!(report.table.rows.len(), 4);

    let cfg = small(StudyKind::PruningCompare);
    let report = run_study(&cfg, &inputs).unwrap();
    assert_eq!(report.table.rows.len(), 3);
    assert_eq!(report.runs.len(), 6);
}

#[test]
fn vm_difference_handles_zero_reference() {
    assert_eq!(relative_vm_difference(0.0, 0.0), Some(0.0));
    assert_eq!(relative_vm_difference(0.0, 5.0), None);
    assert_eq!(relative_vm_difference(200.0, 150.0), Some(25.0));
}
