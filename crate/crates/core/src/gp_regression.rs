//! GP regression on `[0, 1]` with the kernel `exp(-a (s - t)^2)`: empirical
//! Bayes fit of `(a, sigma^2)` and pointwise credible intervals under the
//! three methods.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::kernel::{self, Evidence};
use crate::numeric::{argmax, golden_max, log_grid, Q975};
use crate::rng;
use crate::signals::{synthesize_at, SequenceSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma2_true: f64,
    pub seed: u64,
}

impl RegressionData {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(invalid("regression data needs matching x and y of length >= 2"));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) || y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("inputs must lie in [0, 1] and responses be finite"));
        }
        Ok(RegressionData { x, y, sigma2_true: f64::NAN, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `X_i ~ U(0,1)`, `Y_i = f(X_i) + N(0, sigma2)` with `f` synthesised from
/// the first `basis_size` coefficients.
pub fn simulate_regression(
    truth: &SequenceSignal,
    basis_size: usize,
    n: usize,
    sigma2: f64,
    seed: u64,
) -> Result<RegressionData> {
    if n < 2 || !(sigma2 >= 0.0) || basis_size < 1 || basis_size > truth.len() {
        return Err(invalid("simulation needs n >= 2, sigma2 >= 0 and a basis size within the signal"));
    }
    let c = &truth.coeffs()[..basis_size];
    let mut g = rng::stream(seed);
    let x: Vec<f64> = (0..n).map(|_| g.random::<f64>()).collect();
    let sd = sigma2.sqrt();
    let y = x
        .iter()
        .map(|&xi| synthesize_at(c, xi) + sd * g.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(RegressionData { x, y, sigma2_true: sigma2, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub a_points: usize,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub sigma2_points: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { a_min: 1e-2, a_max: 1e6, a_points: 60, sigma2_min: 1e-6, sigma2_max: 1e2, sigma2_points: 40 }
    }
}

impl SearchBounds {
    fn validate(&self) -> Result<()> {
        if !(self.a_min > 0.0 && self.a_max > self.a_min && self.sigma2_min > 0.0 && self.sigma2_max > self.sigma2_min)
            || self.a_points < 3
            || self.sigma2_points < 3
        {
            return Err(invalid(format!("bad search bounds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Method {
    /// Plug-in estimate, unit inflation.
    M1,
    /// Plug-in estimate, half-width times `log n`.
    M2,
    /// Scale `a` multiplied by `log n`.
    M3,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::M1, Method::M2, Method::M3];

    pub fn label(&self) -> &'static str {
        match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub a_hat: f64,
    pub sigma2_hat: f64,
    pub log_marginal: f64,
    pub a_at_boundary: bool,
    pub sigma2_at_boundary: bool,
}

/// Direct evaluation of `log N(y; 0, K_a + s2 I)` through a Cholesky factor.
pub fn log_marginal_likelihood(data: &RegressionData, a: f64, sigma2: f64) -> Result<f64> {
    let n = data.len();
    let mut k = kernel::gram(&data.x, a);
    for i in 0..n {
        k[(i, i)] += sigma2;
    }
    let (l, _) = kernel::jittered_cholesky(&k)?;
    let mut alpha = data.y.clone();
    kernel::forward_solve(&l, &mut alpha);
    let quad: f64 = alpha.iter().map(|v| v * v).sum();
    let logdet: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
    Ok(-0.5 * (quad + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Best `sigma^2` for a fixed spectrum: grid, then golden section in the
/// bracketing cell.
fn profile_sigma2(spec: &Evidence, b: &SearchBounds) -> (f64, f64) {
    let grid = log_grid(b.sigma2_min, b.sigma2_max, b.sigma2_points);
    let vals: Vec<f64> = grid.iter().map(|&s| spec.log_marginal(s)).collect();
    let Some(k) = argmax(&vals) else {
        return (grid[0], f64::NEG_INFINITY);
    };
    let last = grid.len() - 1;
    let (s, v) = golden_max(|s| spec.log_marginal(s), grid[k.saturating_sub(1)], grid[(k + 1).min(last)], 1e-9, 200);
    if v >= vals[k] {
        (s, v)
    } else {
        (grid[k], vals[k])
    }
}

fn profile(data: &RegressionData, a: f64, b: &SearchBounds) -> Result<(f64, f64)> {
    let spec = Evidence::compute(&data.x, &data.y, a)?;
    Ok(profile_sigma2(&spec, b))
}

/// Maximises the marginal likelihood over the `(a, sigma^2)` grid, then
/// refines `a` by golden section on the profile in `sigma^2`.
pub fn fit_gp(data: &RegressionData, bounds: &SearchBounds) -> Result<GpFit> {
    bounds.validate()?;
    if data.len() < 2 {
        return Err(invalid("need at least two observations"));
    }
    let grid = log_grid(bounds.a_min, bounds.a_max, bounds.a_points);
    let prof = exec::try_map_indexed(grid.len(), |j| profile(data, grid[j], bounds))?;
    let vals: Vec<f64> = prof.iter().map(|p| p.1).collect();
    let k = argmax(&vals).ok_or_else(|| Error::NumericalFailure("marginal likelihood not finite on the grid".into()))?;
    let last = grid.len() - 1;
    let mut failure = None;
    let (a_ref, v_ref) = golden_max(
        |a| match profile(data, a, bounds) {
            Ok(p) => p.1,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        grid[k.saturating_sub(1)],
        grid[(k + 1).min(last)],
        1e-7,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let (a_hat, (sigma2_hat, log_marginal)) =
        if v_ref >= vals[k] { (a_ref, profile(data, a_ref, bounds)?) } else { (grid[k], prof[k]) };
    let rel = |v: f64, lo: f64, hi: f64| v <= lo * (1.0 + 1e-6) || v >= hi * (1.0 - 1e-6);
    Ok(GpFit {
        a_hat,
        sigma2_hat,
        log_marginal,
        a_at_boundary: k == 0 || k == last,
        sigma2_at_boundary: rel(sigma2_hat, bounds.sigma2_min, bounds.sigma2_max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Predictive mean and variance of the latent function under `(a, sigma2)`.
pub fn predict(data: &RegressionData, a: f64, sigma2: f64, at: &[f64]) -> Result<Prediction> {
    let n = data.len();
    let mut k = kernel::gram(&data.x, a);
    for i in 0..n {
        k[(i, i)] += sigma2;
    }
    let (l, _) = kernel::jittered_cholesky(&k)?;
    let mut alpha = data.y.clone();
    kernel::forward_solve(&l, &mut alpha);
    kernel::backward_solve(&l, &mut alpha);
    let rows = exec::map_slice(at, |&t| {
        let mut ks = kernel::cross(&data.x, a, t);
        let mean = ks.iter().zip(&alpha).map(|(u, v)| u * v).sum::<f64>();
        kernel::forward_solve(&l, &mut ks);
        let var = (1.0 - ks.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        (mean, var)
    });
    let (mean, var) = rows.into_iter().unzip();
    Ok(Prediction { x: at.to_vec(), mean, var })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intervals {
    pub method: Method,
    pub a: f64,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl Intervals {
    pub fn contains(&self, k: usize, value: f64) -> bool {
        (value - self.mean[k]).abs() <= self.half_width[k]
    }

    pub fn lower(&self, k: usize) -> f64 {
        self.mean[k] - self.half_width[k]
    }

    pub fn upper(&self, k: usize) -> f64 {
        self.mean[k] + self.half_width[k]
    }
}

/// `mean +- q_{0.975} sqrt(var)` for each method. `M2` scales the `M1`
/// half-width by `log n`; `M3` predicts at `a_hat log n` with the fitted noise.
pub fn method_intervals(fit: &GpFit, data: &RegressionData, at: &[f64]) -> Result<Vec<Intervals>> {
    let log_n = (data.len() as f64).ln();
    let base = predict(data, fit.a_hat, fit.sigma2_hat, at)?;
    let rescaled = predict(data, fit.a_hat * log_n, fit.sigma2_hat, at)?;
    let hw = |p: &Prediction, infl: f64| p.var.iter().map(|v| infl * Q975 * v.sqrt()).collect::<Vec<_>>();
    let (hw1, hw2, hw3) = (hw(&base, 1.0), hw(&base, log_n), hw(&rescaled, 1.0));
    Ok(vec![
        Intervals { method: Method::M1, a: fit.a_hat, x: at.to_vec(), mean: base.mean.clone(), half_width: hw1 },
        Intervals { method: Method::M2, a: fit.a_hat, x: at.to_vec(), mean: base.mean, half_width: hw2 },
        Intervals { method: Method::M3, a: fit.a_hat * log_n, x: at.to_vec(), mean: rescaled.mean, half_width: hw3 },
    ])
}

/// Rows `(method, x, mean, lower, upper)`.
pub fn write_intervals_csv<W: Write>(sets: &[Intervals], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "x", "mean", "lower", "upper"])?;
    for s in sets {
        for k in 0..s.x.len() {
            w.write_record([
                s.method.label().to_string(),
                format!("{:.6}", s.x[k]),
                format!("{:.10e}", s.mean[k]),
                format!("{:.10e}", s.lower(k)),
                format!("{:.10e}", s.upper(k)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
