//! Wide-format coverage and size tables for the regression and
//! classification experiments.

use serde::Deserialize;
use serde_json::json;

use gpcover::harness::{self, CoverageReport, ExperimentPlan};

use crate::{apply_overrides, plan_from_json, read_plan_text, write_artifact, Common, Failure};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TablesPlan {
    regression: ExperimentPlan,
    classification: ExperimentPlan,
}

fn default_plans() -> TablesPlan {
    let base = |model: &str, n: Vec<f64>| {
        plan_from_json(json!({
            "model": model,
            "truth": {"kind": "f2"},
            "n": n,
            "methods": ["M1", "M2", "M3"],
            "replications": 100,
        }))
    };
    TablesPlan {
        regression: base("regression", vec![100.0, 500.0, 1000.0]),
        classification: base("classification", vec![100.0, 200.0, 500.0]),
    }
}

pub(crate) fn run(c: &Common) -> Result<(), Failure> {
    let mut plans = match &c.plan {
        Some(p) => {
            let text = read_plan_text(p)?;
            serde_json::from_str::<TablesPlan>(&text)
                .map_err(|e| Failure::Usage(anyhow::anyhow!("invalid tables plan {}: {e}", p.display())))?
        }
        None => default_plans(),
    };
    for (plan, tables) in [
        (&mut plans.regression, ("table1.csv", "table2.csv")),
        (&mut plans.classification, ("table3.csv", "table4.csv")),
    ] {
        apply_overrides(c, plan);
        plan.validate()?;
        if plan.model == harness::Model::Gwn {
            return Err(Failure::Usage(anyhow::anyhow!("tables plans must be regression or classification")));
        }
        let report = harness::run_pointwise_coverage(plan)?;
        let hash = plan.config_hash();
        write_artifact(&c.out, tables.0, &hash, plan.seed, |w| {
            let (head, rows) = coverage_table(&report, plan);
            write_rows(w, &head, &rows)
        })?;
        write_artifact(&c.out, tables.1, &hash, plan.seed, |w| {
            let (head, rows) = size_table(&report, plan);
            write_rows(w, &head, &rows)
        })?;
        println!("{:?}: wrote {} and {}", plan.model, tables.0, tables.1);
    }
    Ok(())
}

fn write_rows(w: &mut Vec<u8>, head: &[String], rows: &[Vec<String>]) -> gpcover::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(head)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn method_labels(plan: &ExperimentPlan) -> Vec<String> {
    plan.point_methods()
        .map(|ms| ms.iter().map(|m| m.label().to_string()).collect())
        .unwrap_or_default()
}

/// One row per method; a coverage column and its Monte Carlo error for
/// every `(x, n)` pair.
fn coverage_table(report: &CoverageReport, plan: &ExperimentPlan) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = vec!["method".to_string()];
    for x in &plan.eval_points {
        for n in &plan.n {
            head.push(format!("x={x} n={n}"));
            head.push(format!("se x={x} n={n}"));
        }
    }
    let rows = method_labels(plan)
        .into_iter()
        .map(|m| {
            let mut row = vec![m.clone()];
            for x in &plan.eval_points {
                for &n in &plan.n {
                    match report.cell(&m, n, &format!("{x}")) {
                        Some(c) => {
                            row.push(format!("{:.2}", c.coverage));
                            row.push(format!("{:.3}", c.mc_se));
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
            }
            row
        })
        .collect();
    (head, rows)
}

/// One row per method; average interval size per `n` with the standard
/// error over replications.
fn size_table(report: &CoverageReport, plan: &ExperimentPlan) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = vec!["method".to_string()];
    for n in &plan.n {
        head.push(format!("n={n}"));
        head.push(format!("se n={n}"));
    }
    let x0 = plan.eval_points.first().map(|x| format!("{x}")).unwrap_or_default();
    let rows = method_labels(plan)
        .into_iter()
        .map(|m| {
            let mut row = vec![m.clone()];
            for &n in &plan.n {
                match report.cell(&m, n, &x0) {
                    Some(c) => {
                        row.push(format!("{:.4}", c.mean_diameter));
                        row.push(format!("{:.4}", c.diameter_se));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    (head, rows)
}
