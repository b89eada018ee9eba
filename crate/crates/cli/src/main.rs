//! `gpcover`: runs the coverage experiments and writes CSV artifacts with
//! JSON provenance sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gpcover::harness::{self, ExperimentPlan, GwnMethod, Model};
use gpcover::signals::BasisGrid;
use gpcover::{exec, Error};

mod tables;

#[derive(Parser)]
#[command(name = "gpcover", version, about = "Coverage experiments for empirical and hierarchical Bayes GP priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the plan's.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Credible level; overrides the plan's.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior bands for the sequence model on [0.25, 0.4].
    GwnDemo(Common),
    /// Replicated L2 ball coverage from a sequence-model plan.
    GwnCoverage(Common),
    /// Regression and classification tables (table1.csv .. table4.csv).
    Tables(Common),
    /// Likelihood, score and bound functionals, plus the bound sandwich per replication.
    Diag(Common),
    /// Log-log slope of diameters and errors against n.
    RateSlope(Common),
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
    Acceptance(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::NumericalFailure(_)) => Failure::Numerical(e),
            Some(Error::InvalidArgument(_) | Error::Domain { .. } | Error::Json(_)) => Failure::Usage(e),
            _ => Failure::Other(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance failure: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::GwnDemo(c) | Command::GwnCoverage(c) | Command::Tables(c) | Command::Diag(c) | Command::RateSlope(c) => {
            c.clone()
        }
    };
    if common.threads > 0 {
        exec::init_threads(common.threads);
    }
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    match cli.command {
        Command::GwnDemo(c) => gwn_demo(&c),
        Command::GwnCoverage(c) => gwn_coverage(&c),
        Command::Tables(c) => tables::run(&c),
        Command::Diag(c) => diag(&c),
        Command::RateSlope(c) => rate_slope(&c),
    }
}

fn read_plan(c: &Common, fallback: impl FnOnce() -> ExperimentPlan) -> Result<ExperimentPlan, Failure> {
    let mut plan = match &c.plan {
        Some(p) => {
            let text = read_plan_text(p)?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("invalid plan {}: {e}", p.display())))?
        }
        None => fallback(),
    };
    apply_overrides(c, &mut plan);
    plan.validate()?;
    Ok(plan)
}

pub(crate) fn read_plan_text(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| Failure::Usage(anyhow::anyhow!("cannot read plan {}: {e}", p.display())))
}

pub(crate) fn apply_overrides(c: &Common, plan: &mut ExperimentPlan) {
    if let Some(s) = c.seed {
        plan.seed = s;
    }
    if let Some(a) = c.alpha {
        plan.alpha = a;
    }
}

fn require_plan(c: &Common) -> Result<ExperimentPlan, Failure> {
    if c.plan.is_none() {
        return Err(Failure::Usage(anyhow::anyhow!("--plan is required for this command")));
    }
    read_plan(c, || unreachable!())
}

/// Writes `name` under the output directory together with
/// `name.meta.json` carrying the plan hash, seed, subcommand and tool version.
pub(crate) fn write_artifact(
    out: &Path,
    name: &str,
    plan_hash: &str,
    seed: u64,
    body: impl FnOnce(&mut Vec<u8>) -> gpcover::Result<()>,
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    let path = out.join(name);
    fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
    let meta = json!({
        "artifact": name,
        "command": std::env::args().nth(1).unwrap_or_default(),
        "config_hash": plan_hash,
        "master_seed": seed,
        "tool_version": gpcover::VERSION,
    });
    fs::write(out.join(format!("{name}.meta.json")), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

fn demo_plan() -> ExperimentPlan {
    plan_from_json(json!({
        "model": "gwn",
        "truth": {"kind": "f1"},
        "n": [100.0, 500.0, 1000.0, 5000.0],
        "methods": ["EB-L1", "EB-Llogn", "EB-modified", "poly-prior-EB"],
        "replications": 1,
    }))
}

pub(crate) fn plan_from_json(v: serde_json::Value) -> ExperimentPlan {
    serde_json::from_value(v).expect("built-in plan is valid")
}

fn gwn_demo(c: &Common) -> Result<(), Failure> {
    let plan = read_plan(c, demo_plan)?;
    if plan.model != Model::Gwn {
        return Err(Failure::Usage(anyhow::anyhow!("gwn-demo needs a gwn plan")));
    }
    let methods: Vec<GwnMethod> = plan.gwn_methods()?;
    let truth = plan.truth.build(plan.basis_size)?;
    let grid = BasisGrid::uniform(0.25, 0.4, 151, plan.basis_size)?;
    let bands = harness::gwn_demo(&truth, &plan.n, &methods, &grid, plan.alpha, plan.draws, plan.seed)?;
    let hash = plan.config_hash();
    for b in &bands {
        let name = format!("band_{}_n{}.csv", b.method, b.n);
        write_artifact(&c.out, &name, &hash, plan.seed, |w| b.band.write_csv(w))?;
    }
    println!("wrote {} band files to {}", bands.len(), c.out.display());
    Ok(())
}

fn gwn_coverage(c: &Common) -> Result<(), Failure> {
    let plan = require_plan(c)?;
    let report = harness::run_plan(&plan)?;
    let hash = plan.config_hash();
    write_artifact(&c.out, "coverage.csv", &hash, plan.seed, |w| report.write_csv(w))?;
    write_artifact(&c.out, "coverage.json", &hash, plan.seed, |w| {
        serde_json::to_writer_pretty(w, &report).map_err(Error::from)
    })?;
    for cell in &report.cells {
        println!(
            "{:<16} n={:<10} {:<8} coverage={:.3} (se {:.3}) diameter={:.4e}",
            cell.method, cell.n, cell.target, cell.coverage, cell.mc_se, cell.mean_diameter
        );
    }
    check_plan_assertions(&plan, &report)
}

fn check_plan_assertions(plan: &ExperimentPlan, report: &harness::CoverageReport) -> Result<(), Failure> {
    let mut failures = Vec::new();
    if let Some(m) = &report.membership {
        if !m.member {
            failures.push(format!("truth is not in the asserted class (witness {:?})", m.witness));
        }
    }
    for o in harness::evaluate_assertions(report, &plan.assertions) {
        if !o.passed {
            failures.push(format!("{:?}: {}", o.assertion, o.detail));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(failures.join("\n")))
    }
}

fn diag_plan() -> ExperimentPlan {
    plan_from_json(json!({
        "model": "gwn",
        "truth": {"kind": "selfsimilar", "beta": 1.0, "c": 1.0},
        "n": [10000.0],
        "methods": ["EB-L1"],
        "replications": 10,
    }))
}

fn diag(c: &Common) -> Result<(), Failure> {
    let plan = read_plan(c, diag_plan)?;
    if plan.model != Model::Gwn {
        return Err(Failure::Usage(anyhow::anyhow!("diag needs a gwn plan")));
    }
    let truth = plan.truth.build(plan.basis_size)?;
    let hash = plan.config_hash();
    let mut sweep = Vec::new();
    let mut triples = Vec::new();
    for &n in &plan.n {
        let y = harness::gwn_replication_data(&truth, n, plan.seed, 0)?;
        sweep.extend(harness::diag_sweep(&y, &truth, 200)?);
        let s = harness::run_sandwich(&truth, n, plan.replications, plan.seed, &Default::default())?;
        for (r, a) in s.a_hat.iter().enumerate() {
            triples.push((n, r, s.bounds.a_lower, s.bounds.a_upper, *a));
        }
        println!(
            "n={n}: a_lower={:.4} (empty: {}) a_upper={:.4} (empty: {}) inside={}/{}",
            s.bounds.a_lower.value, s.bounds.a_lower.empty, s.bounds.a_upper.value, s.bounds.a_upper.empty,
            s.inside, plan.replications
        );
    }
    write_artifact(&c.out, "diag_sweep.csv", &hash, plan.seed, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "a", "loglik", "score", "h", "g"])?;
        for r in &sweep {
            wr.write_record([r.n, r.a, r.loglik, r.score, r.h, r.g].map(|v| format!("{v:.10e}")))?;
        }
        wr.flush()?;
        Ok(())
    })?;
    write_artifact(&c.out, "diag_bounds.csv", &hash, plan.seed, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "replication", "a_lower", "a_lower_empty", "a_upper", "a_upper_empty", "a_hat"])?;
        for (n, r, lo, hi, a) in &triples {
            wr.write_record([
                format!("{n}"),
                r.to_string(),
                format!("{:.10e}", lo.value),
                lo.empty.to_string(),
                format!("{:.10e}", hi.value),
                hi.empty.to_string(),
                format!("{a:.10e}"),
            ])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn rate_plan() -> ExperimentPlan {
    plan_from_json(json!({
        "model": "gwn",
        "truth": {"kind": "selfsimilar", "beta": 1.0, "c": 1.0},
        "n": [1e3, 1e4, 1e5, 1e6],
        "methods": ["EB-L1", "HB"],
        "replications": 50,
    }))
}

fn rate_slope(c: &Common) -> Result<(), Failure> {
    let plan = read_plan(c, rate_plan)?;
    if plan.model != Model::Gwn {
        return Err(Failure::Usage(anyhow::anyhow!("rate-slope needs a gwn plan")));
    }
    let (report, slopes) = harness::run_rate_slope(&plan)?;
    let hash = plan.config_hash();
    write_artifact(&c.out, "rate_cells.csv", &hash, plan.seed, |w| report.write_csv(w))?;
    write_artifact(&c.out, "rate_slope.csv", &hash, plan.seed, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["method", "quantity", "normalisation", "slope", "slope_se", "intercept"])?;
        for s in &slopes {
            let logn: Vec<f64> = s.n.iter().map(|n| n.ln()).collect();
            let per_log: Vec<f64> = s.median_diameter.iter().zip(&logn).map(|(d, l)| d / l).collect();
            let scaled = harness::log_log_fit(&s.n, &per_log)?;
            for (q, norm, f) in [
                ("diameter", "raw", s.diameter_slope),
                ("diameter", "per_log_n", scaled),
                ("error", "raw", s.error_slope),
            ] {
                wr.write_record([
                    s.method.clone(),
                    q.to_string(),
                    norm.to_string(),
                    format!("{:.6}", f.slope),
                    format!("{:.6}", f.slope_se),
                    format!("{:.6}", f.intercept),
                ])?;
            }
            println!("{}: diameter slope {:.4} +- {:.4}", s.method, s.diameter_slope.slope, s.diameter_slope.slope_se);
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(())
}

