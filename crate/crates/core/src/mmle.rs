//! Marginal likelihood of the prior scale, its score, the maximiser over
//! `[1, A_n]` and the deterministic functionals `h_n`, `g_n` that bracket it.
//!
//! All sums run over `i <= i*(a) = ceil(a (log(n/a) + T))`. Past `i*` the
//! data terms are below `e^{-T}` relative and are dropped, while the data-free
//! terms form geometric series that are added in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::gwn::ObservedSequence;
use crate::numeric::{argmax, golden_max, hurwitz_zeta, log_grid, logistic, softplus, CompensatedSum};
use crate::posterior::{truncation_index, PriorSpec, DEFAULT_MARGIN};
use crate::signals::SequenceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum UpperEndpoint {
    /// `A_n = n / log^2 n`.
    #[default]
    NOverLogSquared,
    Fixed(f64),
}

impl UpperEndpoint {
    pub fn value(&self, n: f64) -> f64 {
        match *self {
            UpperEndpoint::NOverLogSquared => n / n.ln().powi(2),
            UpperEndpoint::Fixed(v) => v,
        }
    }
}

/// Upper end of the search interval under the default rule.
pub fn default_upper(n: f64) -> f64 {
    UpperEndpoint::NOverLogSquared.value(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmleConfig {
    pub upper: UpperEndpoint,
    pub grid_size: usize,
    pub refine_tol: f64,
    pub truncation_margin: f64,
}

impl Default for MmleConfig {
    fn default() -> Self {
        MmleConfig {
            upper: UpperEndpoint::NOverLogSquared,
            grid_size: 400,
            refine_tol: 1e-6,
            truncation_margin: DEFAULT_MARGIN,
        }
    }
}

impl MmleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 16 {
            return Err(invalid("grid_size must be at least 16"));
        }
        if !(self.truncation_margin >= 10.0) {
            return Err(invalid("truncation margin must be at least 10"));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol < 1.0) {
            return Err(invalid("refine_tol must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `A_n`, checked to satisfy `1 < A_n < n`.
    pub fn upper_endpoint(&self, n: f64) -> Result<f64> {
        let a = self.upper.value(n);
        if a > 1.0 && a < n && a.is_finite() {
            Ok(a)
        } else {
            Err(invalid(format!("upper endpoint {a} not inside (1, n) for n = {n}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub b: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub k0: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { b: 1.0 / 32.0, big_b: 1.0, k0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Interior,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmleFit {
    pub a_hat: f64,
    pub a_tilde: f64,
    pub loglik_at_hat: f64,
    pub boundary: Boundary,
}

fn check_domain(a: f64, lo: f64, hi: f64) -> Result<()> {
    if a >= lo && a <= hi && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { a, lo, hi })
    }
}

/// `(l_n(a), M_n(a))` without domain checks.
fn likelihood_and_score(y: &ObservedSequence, a: f64, margin: f64) -> (f64, f64) {
    let n = y.n;
    let ln_n = n.ln();
    let ln_a = a.ln();
    // data terms past i* are weighted by s < e^{-T} and dropped
    let m = truncation_index(a, n, margin);
    let mut ll = CompensatedSum::new();
    let mut sc = CompensatedSum::new();
    for i in 1..=m {
        let fi = i as f64;
        // u = log(n / (a e^{i/a})), s = n / (a e^{i/a} + n)
        let u = ln_n - ln_a - fi / a;
        let s = logistic(u);
        let yi = y.get(i);
        let ny2 = n * yi * yi;
        ll.add(softplus(u) - ny2 * s);
        sc.add((fi - a) * s * (ny2 * (1.0 - s) - 1.0));
    }
    // data-free remainder: log(1+x) ~ x and s ~ x with x = (n/a) q^i
    let q = (-1.0 / a).exp();
    let one_minus_q = -(-1.0 / a).exp_m1();
    let lead = (ln_n - ln_a - (m as f64 + 1.0) / a).exp();
    let mf = m as f64;
    let geo = lead / one_minus_q;
    let geo_i = lead * ((mf + 1.0) - mf * q) / (one_minus_q * one_minus_q);
    ll.add(geo);
    sc.add(-(geo_i - a * geo));
    (-0.5 * ll.value(), sc.value() / (2.0 * a * a))
}

pub fn log_marginal_likelihood(y: &ObservedSequence, a: f64) -> Result<f64> {
    log_marginal_likelihood_with(y, a, &MmleConfig::default())
}

pub fn log_marginal_likelihood_with(y: &ObservedSequence, a: f64, cfg: &MmleConfig) -> Result<f64> {
    check_domain(a, 1.0, cfg.upper_endpoint(y.n)?)?;
    Ok(likelihood_and_score(y, a, cfg.truncation_margin).0)
}

/// `l_n(a)` for any `a >= 1`, ignoring the upper endpoint.
pub fn log_marginal_likelihood_unbounded(y: &ObservedSequence, a: f64, margin: f64) -> Result<f64> {
    check_domain(a, 1.0, f64::INFINITY)?;
    Ok(likelihood_and_score(y, a, margin).0)
}

pub fn score(y: &ObservedSequence, a: f64) -> Result<f64> {
    score_with(y, a, &MmleConfig::default())
}

pub fn score_with(y: &ObservedSequence, a: f64, cfg: &MmleConfig) -> Result<f64> {
    check_domain(a, 1.0, cfg.upper_endpoint(y.n)?)?;
    Ok(likelihood_and_score(y, a, cfg.truncation_margin).1)
}

/// Evaluates `l_n` over a log grid, then polishes the best cell by golden
/// section.
pub fn fit(y: &ObservedSequence, cfg: &MmleConfig) -> Result<MmleFit> {
    cfg.validate()?;
    let hi = cfg.upper_endpoint(y.n)?;
    let grid = log_grid(1.0, hi, cfg.grid_size);
    let values = exec::map_slice(&grid, |&a| likelihood_and_score(y, a, cfg.truncation_margin).0);
    if let Some((k, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!("log-likelihood not finite at a = {}", grid[k])));
    }
    let k = argmax(&values).expect("grid is nonempty");
    let last = grid.len() - 1;
    let boundary = match k {
        0 => Boundary::AtLower,
        k if k == last => Boundary::AtUpper,
        _ => Boundary::Interior,
    };
    let lo = grid[k.saturating_sub(1)];
    let up = grid[(k + 1).min(last)];
    let (mut a_hat, mut best) =
        golden_max(|a| likelihood_and_score(y, a, cfg.truncation_margin).0, lo, up, cfg.refine_tol, 200);
    if values[k] > best {
        a_hat = grid[k];
        best = values[k];
    }
    Ok(MmleFit { a_hat, a_tilde: y.n.ln() * a_hat, loglik_at_hat: best, boundary })
}

/// Shared kernel of `h_n` and `g_n`: `sum_{i >= start} w(i) f_i^2 n s(1-s) / a^2`
/// scaled by `1 / log^2(n/a)`.
fn expected_score_functional(
    a: f64,
    truth: &SequenceSignal,
    n: f64,
    margin: f64,
    start: usize,
    shift: f64,
) -> Result<f64> {
    if !(a >= 1.0 && a < n) {
        return Err(Error::Domain { a, lo: 1.0, hi: n });
    }
    let ln_n = n.ln();
    let ln_a = a.ln();
    // terms past i* carry a factor n/(a e^{i/a}) < e^{-T}
    let m = truncation_index(a, n, margin);
    let mut acc = CompensatedSum::new();
    for i in start.max(1)..=m {
        let fi = i as f64;
        let e = truth.energy_at(i);
        if e == 0.0 {
            continue;
        }
        let s = logistic(ln_n - ln_a - fi / a);
        acc.add((fi - shift) * e * n * s * (1.0 - s));
    }
    Ok(acc.value() / (a * a * (n / a).ln().powi(2)))
}

/// `h_n(a, f0) = log^{-2}(n/a) sum_i n^2 i e^{i/a} f_i^2 / (a (a e^{i/a} + n)^2)`.
pub fn h_fn(a: f64, truth: &SequenceSignal, n: f64) -> Result<f64> {
    h_fn_with(a, truth, n, DEFAULT_MARGIN)
}

pub fn h_fn_with(a: f64, truth: &SequenceSignal, n: f64, margin: f64) -> Result<f64> {
    expected_score_functional(a, truth, n, margin, 1, 0.0)
}

/// As `h_n`, summed from `ceil(2a)` with weight `i - a` in place of `i`.
pub fn g_fn(a: f64, truth: &SequenceSignal, n: f64) -> Result<f64> {
    g_fn_with(a, truth, n, DEFAULT_MARGIN)
}

pub fn g_fn_with(a: f64, truth: &SequenceSignal, n: f64, margin: f64) -> Result<f64> {
    expected_score_functional(a, truth, n, margin, (2.0 * a).ceil() as usize, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    /// The defining set was empty and `value` is the interval's lower end.
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicBounds {
    pub a_lower: BoundEstimate,
    pub a_upper: BoundEstimate,
}

const BOUND_SCAN: usize = 400;
const BOUND_REL_TOL: f64 = 1e-4;

/// `sup { a in [lo, hi] : pred(a) }` by a log-grid scan from the top followed
/// by bisection in the crossing cell.
fn sup_where<F>(lo: f64, hi: f64, pred: F) -> Result<BoundEstimate>
where
    F: Fn(f64) -> Result<bool> + Sync,
{
    let grid = log_grid(lo, hi, BOUND_SCAN);
    let flags = exec::try_map_indexed(grid.len(), |k| pred(grid[k]))?;
    let Some(k) = flags.iter().rposition(|&f| f) else {
        return Ok(BoundEstimate { value: lo, empty: true });
    };
    if k == grid.len() - 1 {
        return Ok(BoundEstimate { value: hi, empty: false });
    }
    let (mut inside, mut outside) = (grid[k], grid[k + 1]);
    while outside - inside > BOUND_REL_TOL * inside {
        let mid = (inside * outside).sqrt();
        if pred(mid)? {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(BoundEstimate { value: inside, empty: false })
}

/// `a_lower = sup{a in [1, A_n] : g_n >= B log n}`,
/// `a_upper = sup{a in [K0, A_n] : h_n >= b}`.
pub fn deterministic_bounds(truth: &SequenceSignal, n: f64, cfg: &BoundsConfig) -> Result<DeterministicBounds> {
    deterministic_bounds_with(truth, n, cfg, &MmleConfig::default())
}

pub fn deterministic_bounds_with(
    truth: &SequenceSignal,
    n: f64,
    cfg: &BoundsConfig,
    mcfg: &MmleConfig,
) -> Result<DeterministicBounds> {
    if !(cfg.b > 0.0 && cfg.big_b > 0.0 && cfg.k0 >= 1.0) {
        return Err(invalid("bounds config needs b, B > 0 and K0 >= 1"));
    }
    let hi = mcfg.upper_endpoint(n)?;
    if cfg.k0 >= hi {
        return Err(invalid("K0 must lie below A_n"));
    }
    let t = mcfg.truncation_margin;
    let threshold = cfg.big_b * n.ln();
    let a_lower = sup_where(1.0, hi, |a| Ok(g_fn_with(a, truth, n, t)? >= threshold))?;
    let a_upper = sup_where(cfg.k0, hi, |a| Ok(h_fn_with(a, truth, n, t)? >= cfg.b))?;
    Ok(DeterministicBounds { a_lower, a_upper })
}

/// `l_n` under the polynomial prior `v_i = i^{-1-2 alpha}`.
///
/// Data terms are explicit. The data-free terms `log(1 + x_i)`,
/// `x_i = n i^{-p}`, are explicit until `x_i < 0.1` and then summed as a
/// power series in `x` using Hurwitz zeta values.
pub fn log_marginal_likelihood_polynomial(y: &ObservedSequence, alpha: f64) -> Result<f64> {
    let prior = PriorSpec::polynomial(alpha)?;
    let n = y.n;
    let p = 1.0 + 2.0 * alpha;
    let small = ((10.0 * n).ln() / p).exp().ceil();
    if small > 5e7 {
        return Err(invalid(format!("smoothness {alpha} too small for n = {n}")));
    }
    let m = y.len().max(small as usize);
    let mut acc = CompensatedSum::new();
    for i in 1..=m {
        let u = n.ln() - prior.log_prior_precision(i);
        let yi = y.get(i);
        acc.add(softplus(u) - n * yi * yi * logistic(u));
    }
    let q = m as f64 + 1.0;
    for k in 1..=12 {
        let kf = k as f64;
        let term = n.powi(k) * hurwitz_zeta(kf * p, q) / kf;
        acc.add(if k % 2 == 1 { term } else { -term });
    }
    Ok(-0.5 * acc.value())
}

/// Maximiser of the polynomial-prior likelihood over `alpha` in `[lo, hi]`.
pub fn fit_polynomial(y: &ObservedSequence, lo: f64, hi: f64, grid_size: usize) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi > lo) || grid_size < 4 {
        return Err(invalid("polynomial smoothness range must satisfy 0 < lo < hi"));
    }
    let grid = log_grid(lo, hi, grid_size);
    let values = exec::try_map_indexed(grid.len(), |k| log_marginal_likelihood_polynomial(y, grid[k]))?;
    let k = argmax(&values).ok_or_else(|| Error::NumericalFailure("polynomial likelihood not finite".into()))?;
    let last = grid.len() - 1;
    let (x, fx) = golden_max(
        |al| log_marginal_likelihood_polynomial(y, al).unwrap_or(f64::NEG_INFINITY),
        grid[k.saturating_sub(1)],
        grid[(k + 1).min(last)],
        1e-6,
        200,
    );
    Ok(if fx >= values[k] { (x, fx) } else { (grid[k], values[k]) })
}
