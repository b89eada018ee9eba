//! Replicated coverage experiments over methods, models, truths and sample
//! sizes, with deterministic per-replication seeds.
//!
//! Replication `r` at sample size `n` draws everything from
//! `derive(seed, [n.to_bits(), r])`, so all methods see the same data and
//! results do not depend on thread count or method selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::credible::{self, Band, CredibleBall};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::gp_classification::{self, simulate_classification};
use crate::gp_regression::{self, simulate_regression, Method, SearchBounds};
use crate::gwn::{simulate, ObservedSequence, DEFAULT_OBSERVED};
use crate::hb::{self, HyperFamily, HyperPrior};
use crate::mmle::{self, BoundsConfig, DeterministicBounds, MmleConfig};
use crate::numeric::{fit_line, median, LineFit};
use crate::posterior::{posterior, truncation_index, PriorSpec, DEFAULT_MARGIN};
use crate::rng::derive;
use crate::signals::{
    check_membership, make_analytic, BasisGrid, make_f1, make_f2, make_selfsimilar, FunctionClassSpec, Membership,
    SequenceSignal, DEFAULT_LENGTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Gwn,
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    Selfsimilar { beta: f64, c: f64 },
    Analytic { gamma: f64, c: f64 },
    F1,
    F2,
}

impl TruthSpec {
    pub fn build(&self, len: usize) -> Result<SequenceSignal> {
        match *self {
            TruthSpec::Selfsimilar { beta, c } => make_selfsimilar(beta, c, len),
            TruthSpec::Analytic { gamma, c } => make_analytic(gamma, c, len),
            TruthSpec::F1 => make_f1(len),
            TruthSpec::F2 => make_f2(len),
        }
    }
}

/// Inflation factor `L` of a credible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inflation {
    Const(f64),
    LogN,
}

impl Inflation {
    pub fn value(&self, n: f64) -> f64 {
        match *self {
            Inflation::Const(v) => v,
            Inflation::LogN => n.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    /// Maximum marginal likelihood scale.
    Eb,
    /// Scale multiplied by `log n`.
    EbModified,
    /// Hierarchical prior on the scale.
    Hb,
    /// Polynomial prior with estimated smoothness.
    PolyEb,
}

/// A sequence-model method: estimator plus inflation, written
/// `EST[-L<value|logn>]`, e.g. `EB-L1`, `EB-Llogn`, `EB-modified`, `HB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwnMethod {
    pub estimator: Estimator,
    pub inflation: Inflation,
}

impl FromStr for GwnMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, infl) = match s.rfind("-L") {
            Some(k) => (&s[..k], Some(&s[k + 2..])),
            None => (s, None),
        };
        let estimator = match base {
            "EB" => Estimator::Eb,
            "EB-modified" => Estimator::EbModified,
            "HB" => Estimator::Hb,
            "poly-prior-EB" => Estimator::PolyEb,
            _ => return Err(invalid(format!("unknown method '{s}'"))),
        };
        let inflation = match infl {
            None => Inflation::Const(1.0),
            Some("logn") => Inflation::LogN,
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x >= 1.0 => Inflation::Const(x),
                _ => return Err(invalid(format!("bad inflation in method '{s}'"))),
            },
        };
        Ok(GwnMethod { estimator, inflation })
    }
}

impl fmt::Display for GwnMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.estimator {
            Estimator::Eb => "EB",
            Estimator::EbModified => "EB-modified",
            Estimator::Hb => "HB",
            Estimator::PolyEb => "poly-prior-EB",
        };
        match self.inflation {
            Inflation::Const(v) if v == 1.0 && self.estimator != Estimator::Eb => write!(f, "{base}"),
            Inflation::Const(v) => write!(f, "{base}-L{v}"),
            Inflation::LogN => write!(f, "{base}-Llogn"),
        }
    }
}

/// Pointwise-model method names: `M1`/`EB-L1`, `M2`/`EB-Llogn`,
/// `M3`/`EB-modified`.
pub fn parse_point_method(s: &str) -> Result<Method> {
    match s {
        "M1" | "EB-L1" | "EB" => Ok(Method::M1),
        "M2" | "EB-Llogn" => Ok(Method::M2),
        "M3" | "EB-modified" => Ok(Method::M3),
        _ => Err(invalid(format!("method '{s}' is not available for pointwise models"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assertion {
    CoverageAtLeast { method: String, n: Option<f64>, target: Option<String>, value: f64 },
    CoverageAtMost { method: String, n: Option<f64>, target: Option<String>, value: f64 },
}

fn default_replications() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_draws() -> usize {
    credible::DEFAULT_DRAWS
}
fn default_basis() -> usize {
    DEFAULT_LENGTH
}
fn default_sigma2() -> f64 {
    0.5
}
fn default_eval_points() -> Vec<f64> {
    vec![0.25, 0.3188, 0.75]
}
fn default_hb_grid() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub model: Model,
    pub truth: TruthSpec,
    pub n: Vec<f64>,
    pub methods: Vec<String>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_points")]
    pub eval_points: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_basis")]
    pub basis_size: usize,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub hyper_prior: HyperFamily,
    #[serde(default = "default_hb_grid")]
    pub hb_grid: usize,
    #[serde(default)]
    pub membership: Option<FunctionClassSpec>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(invalid("replications must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods must be nonempty"));
        }
        if self.n.is_empty() {
            return Err(invalid("n list must be nonempty"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        if self.eval_points.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("eval points must lie in [0, 1]"));
        }
        match self.model {
            Model::Gwn => {
                if self.n.iter().any(|&n| !(n > 1.0 && n.is_finite())) {
                    return Err(invalid("signal-to-noise values must exceed 1"));
                }
                self.gwn_methods()?;
            }
            Model::Regression | Model::Classification => {
                if self.n.iter().any(|&n| !(n >= 2.0 && n.fract() == 0.0)) {
                    return Err(invalid("sample sizes must be integers >= 2"));
                }
                self.point_methods()?;
            }
        }
        Ok(())
    }

    pub fn gwn_methods(&self) -> Result<Vec<GwnMethod>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn point_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| parse_point_method(m)).collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.config_hash(), master_seed: self.seed, version: crate::VERSION.to_string() }
    }

    fn truth_signal(&self) -> Result<SequenceSignal> {
        self.truth.build(self.basis_size.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub method: String,
    pub n: f64,
    /// `l2` for balls, otherwise the evaluation point.
    pub target: String,
    pub replications: usize,
    pub covered: usize,
    pub coverage: f64,
    pub mc_se: f64,
    /// Mean radius (balls) or mean half-width (intervals).
    pub mean_radius: f64,
    pub mean_diameter: f64,
    /// Standard error of `mean_diameter` over replications.
    pub diameter_se: f64,
    pub median_diameter: f64,
    pub median_error: f64,
    /// Mean of the scale used (`a` or, for the polynomial prior, `alpha`).
    pub mean_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub model: Model,
    pub cells: Vec<CoverageCell>,
    pub provenance: Provenance,
    pub membership: Option<Membership>,
    pub wall_time_s: f64,
}

impl CoverageReport {
    pub fn cell(&self, method: &str, n: f64, target: &str) -> Option<&CoverageCell> {
        self.cells.iter().find(|c| c.method == method && c.n == n && c.target == target)
    }

    /// Cells in a fixed order; wall time is left out so reruns are identical.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "n",
            "target",
            "replications",
            "covered",
            "coverage",
            "mc_se",
            "mean_radius",
            "mean_diameter",
            "diameter_se",
            "median_diameter",
            "median_error",
            "mean_scale",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.method.clone(),
                format!("{}", c.n),
                c.target.clone(),
                c.replications.to_string(),
                c.covered.to_string(),
                format!("{:.4}", c.coverage),
                format!("{:.4}", c.mc_se),
                format!("{:.8e}", c.mean_radius),
                format!("{:.8e}", c.mean_diameter),
                format!("{:.8e}", c.diameter_se),
                format!("{:.8e}", c.median_diameter),
                format!("{:.8e}", c.median_error),
                format!("{:.8e}", c.mean_scale),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    covered: bool,
    radius: f64,
    diameter: f64,
    error: f64,
    scale: f64,
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn aggregate(method: String, n: f64, target: String, outs: &[Outcome]) -> CoverageCell {
    let r = outs.len();
    let covered = outs.iter().filter(|o| o.covered).count();
    let p = covered as f64 / r as f64;
    let mean = |f: fn(&Outcome) -> f64| outs.iter().map(f).sum::<f64>() / r as f64;
    let diam: Vec<f64> = outs.iter().map(|o| o.diameter).collect();
    let err: Vec<f64> = outs.iter().map(|o| o.error).collect();
    CoverageCell {
        method,
        n,
        target,
        replications: r,
        covered,
        coverage: p,
        mc_se: (p * (1.0 - p) / r as f64).sqrt(),
        mean_radius: mean(|o| o.radius),
        mean_diameter: mean(|o| o.diameter),
        diameter_se: sample_sd(&diam) / (r as f64).sqrt(),
        median_diameter: median(&diam),
        median_error: if err.iter().all(|e| e.is_nan()) { f64::NAN } else { median(&err) },
        mean_scale: mean(|o| o.scale),
    }
}

/// Number of observed coordinates at signal-to-noise `n`: enough for every
/// scale up to `A_n` to see its full truncation window.
pub fn observed_length(n: f64) -> usize {
    let cfg = MmleConfig::default();
    match cfg.upper_endpoint(n) {
        Ok(hi) => DEFAULT_OBSERVED.max(truncation_index(hi, n, DEFAULT_MARGIN)),
        Err(_) => DEFAULT_OBSERVED,
    }
}

/// Seed of replication `r` at sample size `n`.
pub fn replication_seed(master: u64, n: f64, r: usize) -> u64 {
    derive(master, &[n.to_bits(), r as u64])
}

/// Simulated data of replication `r`, exactly as the coverage runs see it.
pub fn gwn_replication_data(truth: &SequenceSignal, n: f64, master: u64, r: usize) -> Result<ObservedSequence> {
    simulate(truth, n, observed_length(n), derive(replication_seed(master, n, r), &[0]))
}

struct GwnContext<'a> {
    truth: &'a SequenceSignal,
    plan: &'a ExperimentPlan,
    hyper: Option<HyperPrior>,
}

fn gwn_replication(ctx: &GwnContext<'_>, methods: &[GwnMethod], n: f64, r: usize) -> Result<Vec<Outcome>> {
    let plan = ctx.plan;
    let rep = replication_seed(plan.seed, n, r);
    let y = simulate(ctx.truth, n, observed_length(n), derive(rep, &[0]))?;
    let radius_seed = derive(rep, &[1]);
    let mut balls: Vec<Option<(CredibleBall, f64)>> = vec![None; 4];
    let slot = |e: Estimator| e as usize;
    let mut out = Vec::with_capacity(methods.len());
    for m in methods {
        if balls[slot(m.estimator)].is_none() {
            let built = match m.estimator {
                Estimator::Eb | Estimator::EbModified => {
                    let fit = mmle::fit(&y, &MmleConfig::default())?;
                    let a = if m.estimator == Estimator::Eb { fit.a_hat } else { fit.a_tilde };
                    let post = posterior(&y, PriorSpec::Exponential { a })?;
                    let r = credible::radius_fixed_a(a, n, plan.alpha, plan.draws, radius_seed)?;
                    (CredibleBall::new(post.means, r, 1.0, plan.alpha, plan.draws, radius_seed)?, a)
                }
                Estimator::Hb => {
                    let hp = hb::hyper_posterior(&y, ctx.hyper.as_ref().expect("hyper-prior built"), plan.hb_grid)?;
                    let center = hb::hb_posterior_mean(&y, &hp);
                    let r = credible::radius_hb(&y, &hp, &center, plan.alpha, plan.draws, radius_seed)?;
                    let mean_a = hp.mean_a();
                    (CredibleBall::new(center, r, 1.0, plan.alpha, plan.draws, radius_seed)?, mean_a)
                }
                Estimator::PolyEb => {
                    let (alpha_hat, _) = mmle::fit_polynomial(&y, 0.1, 10.0, 60)?;
                    let prior = PriorSpec::polynomial(alpha_hat)?;
                    let post = posterior(&y, prior)?;
                    let r = credible::radius(&prior, n, plan.alpha, plan.draws, radius_seed)?;
                    (CredibleBall::new(post.means, r, 1.0, plan.alpha, plan.draws, radius_seed)?, alpha_hat)
                }
            };
            balls[slot(m.estimator)] = Some(built);
        }
        let (ball, scale) = balls[slot(m.estimator)].as_ref().expect("filled above");
        let ball = ball.with_inflation(m.inflation.value(n).max(1.0))?;
        let dist = credible::distance_sq(&ball.center, ctx.truth).sqrt();
        out.push(Outcome {
            covered: credible::covers(&ball, ctx.truth),
            radius: ball.radius,
            diameter: credible::diameter(&ball),
            error: dist,
            scale: *scale,
        });
    }
    Ok(out)
}

/// Replicated `L2` ball coverage in the sequence model.
pub fn run_gwn_coverage(plan: &ExperimentPlan) -> Result<CoverageReport> {
    plan.validate()?;
    if plan.model != Model::Gwn {
        return Err(invalid("plan model must be gwn"));
    }
    let start = Instant::now();
    let methods = plan.gwn_methods()?;
    let truth = plan.truth_signal()?;
    let membership = plan.membership.as_ref().map(|spec| check_membership(&truth, spec)).transpose()?;
    let needs_hb = methods.iter().any(|m| m.estimator == Estimator::Hb);
    let mut cells = Vec::new();
    for &n in &plan.n {
        let hyper = if needs_hb { Some(HyperPrior::for_n(plan.hyper_prior, n)?) } else { None };
        let ctx = GwnContext { truth: &truth, plan, hyper };
        let reps = exec::try_map_indexed(plan.replications, |r| gwn_replication(&ctx, &methods, n, r))?;
        for (k, m) in methods.iter().enumerate() {
            let outs: Vec<Outcome> = reps.iter().map(|rep| rep[k]).collect();
            cells.push(aggregate(m.to_string(), n, "l2".into(), &outs));
        }
    }
    Ok(CoverageReport {
        model: Model::Gwn,
        cells,
        provenance: plan.provenance(),
        membership,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Per-replication interval outcomes at every eval point, methods in
/// `Method::ALL` order.
fn pointwise_replication(plan: &ExperimentPlan, truth: &SequenceSignal, n: usize, r: usize) -> Result<Vec<Vec<Outcome>>> {
    let rep = replication_seed(plan.seed, n as f64, r);
    let at = &plan.eval_points;
    let truth_at: Vec<f64> = at
        .iter()
        .map(|&x| crate::signals::synthesize_at(&truth.coeffs()[..plan.basis_size], x))
        .collect();
    let bounds = SearchBounds::default();
    let sets: Vec<(Method, f64, Vec<f64>, Vec<f64>)> = match plan.model {
        Model::Regression => {
            let data = simulate_regression(truth, plan.basis_size, n, plan.sigma2, derive(rep, &[0]))?;
            let fit = gp_regression::fit_gp(&data, &bounds)?;
            gp_regression::method_intervals(&fit, &data, at)?
                .into_iter()
                .map(|s| (s.method, s.a, s.mean, s.half_width))
                .collect()
        }
        Model::Classification => {
            let mut seed = derive(rep, &[0]);
            let mut data = simulate_classification(truth, plan.basis_size, n, seed)?;
            // redraw the rare single-class samples
            let mut tries = 0;
            while data.is_degenerate() && tries < 100 {
                tries += 1;
                seed = derive(rep, &[0, tries]);
                data = simulate_classification(truth, plan.basis_size, n, seed)?;
            }
            let fit = gp_classification::fit_classifier(&data, &bounds)?;
            gp_classification::method_intervals(&fit, &data, at)
                .into_iter()
                .map(|s| (s.method, s.a, s.mean, s.half_width))
                .collect()
        }
        Model::Gwn => unreachable!("checked by caller"),
    };
    Ok(sets
        .into_iter()
        .map(|(_, a, mean, hw)| {
            let size = 2.0 * hw.iter().sum::<f64>() / hw.len() as f64;
            (0..at.len())
                .map(|k| Outcome {
                    covered: (truth_at[k] - mean[k]).abs() <= hw[k],
                    radius: hw[k],
                    diameter: size,
                    error: (truth_at[k] - mean[k]).abs(),
                    scale: a,
                })
                .collect()
        })
        .collect())
}

/// Replicated pointwise interval coverage for the regression and
/// classification models. Cell `mean_diameter` is the interval size
/// `2 q sqrt(var)` averaged over the eval points and replications.
pub fn run_pointwise_coverage(plan: &ExperimentPlan) -> Result<CoverageReport> {
    plan.validate()?;
    if plan.model == Model::Gwn {
        return Err(invalid("plan model must be regression or classification"));
    }
    if plan.eval_points.is_empty() {
        return Err(invalid("pointwise runs need eval points"));
    }
    let start = Instant::now();
    let methods = plan.point_methods()?;
    let truth = plan.truth_signal()?;
    let membership = plan.membership.as_ref().map(|spec| check_membership(&truth, spec)).transpose()?;
    let mut cells = Vec::new();
    for &n in &plan.n {
        let nn = n as usize;
        let reps = exec::try_map_indexed(plan.replications, |r| pointwise_replication(plan, &truth, nn, r))?;
        for m in &methods {
            let mi = Method::ALL.iter().position(|x| x == m).expect("known method");
            for (k, x) in plan.eval_points.iter().enumerate() {
                let outs: Vec<Outcome> = reps.iter().map(|rep| rep[mi][k]).collect();
                cells.push(aggregate(m.label().to_string(), n, format!("{x}"), &outs));
            }
        }
    }
    Ok(CoverageReport {
        model: plan.model,
        cells,
        provenance: plan.provenance(),
        membership,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Dispatches on the plan's model.
pub fn run_plan(plan: &ExperimentPlan) -> Result<CoverageReport> {
    match plan.model {
        Model::Gwn => run_gwn_coverage(plan),
        _ => run_pointwise_coverage(plan),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub assertion: Assertion,
    pub passed: bool,
    pub detail: String,
}

pub fn evaluate_assertions(report: &CoverageReport, assertions: &[Assertion]) -> Vec<AssertionOutcome> {
    assertions
        .iter()
        .map(|a| {
            let (method, n, target, value, at_least) = match a {
                Assertion::CoverageAtLeast { method, n, target, value } => (method, n, target, *value, true),
                Assertion::CoverageAtMost { method, n, target, value } => (method, n, target, *value, false),
            };
            let cells: Vec<&CoverageCell> = report
                .cells
                .iter()
                .filter(|c| &c.method == method)
                .filter(|c| n.is_none_or(|v| c.n == v))
                .filter(|c| target.as_ref().is_none_or(|t| &c.target == t))
                .collect();
            let failing: Vec<String> = cells
                .iter()
                .filter(|c| if at_least { c.coverage < value } else { c.coverage > value })
                .map(|c| format!("n={} target={} coverage={:.3}", c.n, c.target, c.coverage))
                .collect();
            let passed = !cells.is_empty() && failing.is_empty();
            let detail = if cells.is_empty() { "no matching cells".to_string() } else { failing.join("; ") };
            AssertionOutcome { assertion: a.clone(), passed, detail }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub method: String,
    pub n: Vec<f64>,
    pub median_diameter: Vec<f64>,
    pub median_error: Vec<f64>,
    pub diameter_slope: LineFit,
    pub error_slope: LineFit,
}

/// Regresses `log` median diameter and `log` median error on `log n` for each
/// method of a sequence-model plan.
pub fn run_rate_slope(plan: &ExperimentPlan) -> Result<(CoverageReport, Vec<SlopeReport>)> {
    if plan.n.len() < 3 {
        return Err(invalid("rate slope needs at least three sample sizes"));
    }
    let report = run_gwn_coverage(plan)?;
    let slopes = slopes_from_cells(&report.cells)?;
    Ok((report, slopes))
}

pub fn slopes_from_cells(cells: &[CoverageCell]) -> Result<Vec<SlopeReport>> {
    let mut methods: Vec<&str> = Vec::new();
    for c in cells {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&CoverageCell> = cells.iter().filter(|c| c.method == m).collect();
            let n: Vec<f64> = mine.iter().map(|c| c.n).collect();
            let d: Vec<f64> = mine.iter().map(|c| c.median_diameter).collect();
            let e: Vec<f64> = mine.iter().map(|c| c.median_error).collect();
            Ok(SlopeReport {
                method: m.to_string(),
                diameter_slope: log_log_fit(&n, &d)?,
                error_slope: log_log_fit(&n, &e)?,
                n,
                median_diameter: d,
                median_error: e,
            })
        })
        .collect()
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() < 3 {
        return Err(invalid("slope fit needs at least three points"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).ok_or_else(|| invalid("degenerate slope fit"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub n: f64,
    pub bounds: DeterministicBounds,
    pub a_hat: Vec<f64>,
    pub inside: usize,
    pub fraction_inside: f64,
}

/// How often `a_lower <= a_hat <= a_upper` across replications.
pub fn run_sandwich(
    truth: &SequenceSignal,
    n: f64,
    replications: usize,
    seed: u64,
    cfg: &BoundsConfig,
) -> Result<SandwichReport> {
    if replications < 1 {
        return Err(invalid("replications must be at least 1"));
    }
    let bounds = mmle::deterministic_bounds(truth, n, cfg)?;
    let a_hat = exec::try_map_indexed(replications, |r| {
        let y = gwn_replication_data(truth, n, seed, r)?;
        Ok::<_, Error>(mmle::fit(&y, &MmleConfig::default())?.a_hat)
    })?;
    let (lo, hi) = (bounds.a_lower.value, bounds.a_upper.value);
    let inside = a_hat.iter().filter(|&&a| a >= lo && a <= hi).count();
    Ok(SandwichReport { n, bounds, fraction_inside: inside as f64 / replications as f64, inside, a_hat })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: f64,
    pub bounds: DeterministicBounds,
    pub interval: (f64, f64),
    pub masses: Vec<f64>,
    pub mean_mass: f64,
}

/// Hyper-posterior mass of `[a_lower log n / (1 + log n), c a_upper]`.
pub fn run_hb_concentration(
    truth: &SequenceSignal,
    n: f64,
    replications: usize,
    seed: u64,
    family: HyperFamily,
    c: f64,
) -> Result<ConcentrationReport> {
    if replications < 1 {
        return Err(invalid("replications must be at least 1"));
    }
    let bounds = mmle::deterministic_bounds(truth, n, &BoundsConfig::default())?;
    let ln = n.ln();
    let interval = (bounds.a_lower.value * ln / (1.0 + ln), c * bounds.a_upper.value);
    let prior = HyperPrior::for_n(family, n)?;
    let masses = exec::try_map_indexed(replications, |r| {
        let y = gwn_replication_data(truth, n, seed, r)?;
        let hp = hb::hyper_posterior(&y, &prior, 400)?;
        Ok::<_, Error>(hp.mass_between(interval.0, interval.1))
    })?;
    let mean_mass = masses.iter().sum::<f64>() / replications as f64;
    Ok(ConcentrationReport { n, bounds, interval, masses, mean_mass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoBand {
    pub method: String,
    pub n: f64,
    /// Scale (`a`) or smoothness (`alpha`) the band was drawn at.
    pub scale: f64,
    pub band: Band,
}

/// Posterior bands for each `(n, method)` from one simulated data set per
/// `n`. The hierarchical method has no band construction and is rejected.
pub fn gwn_demo(
    truth: &SequenceSignal,
    n_list: &[f64],
    methods: &[GwnMethod],
    grid: &BasisGrid,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<DemoBand>> {
    if methods.iter().any(|m| m.estimator == Estimator::Hb) {
        return Err(invalid("bands are not available for the hierarchical method"));
    }
    let mut out = Vec::new();
    for &n in n_list {
        let y = gwn_replication_data(truth, n, seed, 0)?;
        let band_seed = derive(replication_seed(seed, n, 0), &[2]);
        let fit = mmle::fit(&y, &MmleConfig::default())?;
        for m in methods {
            let (prior, scale) = match m.estimator {
                Estimator::Eb => (PriorSpec::Exponential { a: fit.a_hat }, fit.a_hat),
                Estimator::EbModified => (PriorSpec::Exponential { a: fit.a_tilde }, fit.a_tilde),
                Estimator::PolyEb => {
                    let (al, _) = mmle::fit_polynomial(&y, 0.1, 10.0, 60)?;
                    (PriorSpec::polynomial(al)?, al)
                }
                Estimator::Hb => unreachable!("rejected above"),
            };
            let post = posterior(&y, prior)?;
            let band = credible::band(&post, truth, grid, alpha, m.inflation.value(n).max(1.0), draws, band_seed)?;
            out.push(DemoBand { method: m.to_string(), n, scale, band });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagRow {
    pub n: f64,
    pub a: f64,
    pub loglik: f64,
    pub score: f64,
    pub h: f64,
    pub g: f64,
}

/// `(l_n, M_n, h_n, g_n)` along a log grid of `[1, A_n]`.
pub fn diag_sweep(y: &ObservedSequence, truth: &SequenceSignal, points: usize) -> Result<Vec<DiagRow>> {
    let cfg = MmleConfig::default();
    let hi = cfg.upper_endpoint(y.n)?;
    let grid = crate::numeric::log_grid(1.0, hi, points.max(2));
    exec::try_map_indexed(grid.len(), |k| {
        let a = grid[k];
        Ok(DiagRow {
            n: y.n,
            a,
            loglik: mmle::log_marginal_likelihood(y, a)?,
            score: mmle::score(y, a)?,
            h: mmle::h_fn(a, truth, y.n)?,
            g: mmle::g_fn(a, truth, y.n)?,
        })
    })
}
