use std::fs;

use gpcover::exec;
use gpcover::harness::{evaluate_assertions, run_plan, Assertion, ExperimentPlan, Model};

const PLAN: &str = r#"{
    "model": "gwn",
    "truth": {"kind": "selfsimilar", "beta": 1.0, "c": 1.0},
    "n": [100, 1000],
    "methods": ["EB-L1", "EB-Llogn"],
    "replications": 6,
    "draws": 200,
    "seed": 11,
    "assertions": [
        {"kind": "coverage_at_least", "method": "EB-Llogn", "n": null, "target": null, "value": 0.0},
        {"kind": "coverage_at_most", "method": "HB", "n": null, "target": null, "value": 1.0}
    ]
}"#;

#[test]
fn plan_defaults_and_hash() {
    let plan = ExperimentPlan::from_json(PLAN).unwrap();
    assert_eq!(plan.model, Model::Gwn);
    assert_eq!(plan.alpha, 0.05);
    assert_eq!(plan.eval_points, vec![0.25, 0.3188, 0.75]);
    assert_eq!(plan.config_hash().len(), 64);

    let mut other = plan.clone();
    other.seed += 1;
    assert_ne!(plan.config_hash(), other.config_hash());

    let round: ExperimentPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(round.config_hash(), plan.config_hash());
}

#[test]
fn malformed_plans_are_rejected() {
    assert!(ExperimentPlan::from_json("{").is_err());
    assert!(ExperimentPlan::from_json(&PLAN.replace("\"seed\"", "\"sede\"")).is_err());
    assert!(ExperimentPlan::from_json(&PLAN.replace("\"EB-L1\"", "\"EB-X\"")).is_err());
    assert!(ExperimentPlan::from_json(&PLAN.replace("[100, 1000]", "[0.5]")).is_err());
    assert!(ExperimentPlan::from_json(&PLAN.replace("\"replications\": 6", "\"replications\": 0")).is_err());
}

#[test]
fn csv_is_identical_across_runs_and_modes() {
    let plan = ExperimentPlan::from_json(PLAN).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let write = |name: &str| {
        let report = run_plan(&plan).unwrap();
        let path = dir.path().join(name);
        report.write_csv(fs::File::create(&path).unwrap()).unwrap();
        (report, fs::read(&path).unwrap())
    };
    let (report, first) = write("a.csv");
    let (_, second) = write("b.csv");
    exec::set_parallel(false);
    let (_, third) = write("c.csv");
    exec::set_parallel(true);

    assert_eq!(first, second);
    assert_eq!(first, third);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.lines().next().unwrap().starts_with("method,n,"));

    let outcomes = evaluate_assertions(&report, &plan.assertions);
    assert!(outcomes[0].passed);
    assert!(!outcomes[1].passed, "no HB cells were run");
    assert_eq!(outcomes[1].detail, "no matching cells");
    assert!(matches!(outcomes[1].assertion, Assertion::CoverageAtMost { .. }));
}
