//! Binary GP classification with the logistic link, fitted by the Laplace
//! approximation. The mode search uses `B = I + W^{1/2} K W^{1/2}`, which is
//! well conditioned for any kernel, so `K` itself is never factorised.

use std::io::Write;

use faer::{Mat, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::gp_regression::{Method, SearchBounds};
use crate::kernel;
use crate::numeric::{argmax, golden_max, log_grid, logistic, softplus, Q975};
use crate::rng;
use crate::signals::{synthesize_at, SequenceSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationData {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub seed: u64,
}

impl ClassificationData {
    pub fn new(x: Vec<f64>, y: Vec<u8>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(invalid("classification data needs matching nonempty x and y"));
        }
        if y.iter().any(|&v| v > 1) || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("labels must be 0/1 and inputs lie in [0, 1]"));
        }
        Ok(ClassificationData { x, y, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Only one class present.
    pub fn is_degenerate(&self) -> bool {
        let ones = self.y.iter().filter(|&&v| v == 1).count();
        ones == 0 || ones == self.y.len()
    }
}

/// `X_i ~ U(0,1)`, `Y_i ~ Bernoulli(psi(f(X_i)))`.
pub fn simulate_classification(
    truth: &SequenceSignal,
    basis_size: usize,
    n: usize,
    seed: u64,
) -> Result<ClassificationData> {
    if n < 1 || basis_size < 1 || basis_size > truth.len() {
        return Err(invalid("simulation needs n >= 1 and a basis size within the signal"));
    }
    let c = &truth.coeffs()[..basis_size];
    let mut g = rng::stream(seed);
    let x: Vec<f64> = (0..n).map(|_| g.random::<f64>()).collect();
    let y = x
        .iter()
        .map(|&xi| u8::from(g.random::<f64>() < logistic(synthesize_at(c, xi))))
        .collect();
    Ok(ClassificationData { x, y, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceFit {
    pub a: f64,
    pub mode: Vec<f64>,
    /// `grad log p(y | f)` at the mode, equal to `K^{-1} f` there.
    pub grad: Vec<f64>,
    pub approx_log_marginal: f64,
    pub newton_iters: usize,
    pub converged: bool,
    /// Objective after each accepted Newton step.
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    chol_b: Mat<f64>,
}

const MAX_NEWTON: usize = 100;

fn log_lik(y: &[u8], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(&yi, &fi)| if yi == 1 { -softplus(-fi) } else { -softplus(fi) }).sum()
}

fn mat_vec(k: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let col = k.col_as_slice(j);
        for (o, kij) in out.iter_mut().zip(col) {
            *o += kij * vj;
        }
    }
    out
}

/// Newton state at latent `f = K alpha`.
struct Step {
    alpha: Vec<f64>,
    f: Vec<f64>,
    objective: f64,
}

fn state(k: &Mat<f64>, y: &[u8], alpha: Vec<f64>) -> Step {
    let f = mat_vec(k, &alpha);
    let objective = -0.5 * alpha.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + log_lik(y, &f);
    Step { alpha, f, objective }
}

/// Cholesky of `I + W^{1/2} K W^{1/2}`.
fn chol_b(k: &Mat<f64>, sw: &[f64]) -> Result<Mat<f64>> {
    let n = sw.len();
    let b = Mat::from_fn(n, n, |i, j| sw[i] * k[(i, j)] * sw[j] + if i == j { 1.0 } else { 0.0 });
    Ok(b
        .llt(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("Cholesky of B failed: {e:?}")))?
        .L()
        .to_owned())
}

fn laplace_with_gram(data: &ClassificationData, a: f64, k: &Mat<f64>) -> Result<LaplaceFit> {
    let n = data.len();
    let y = &data.y;
    let tol = 1e-8 * (n as f64).sqrt();
    // accepted once Newton can no longer increase the objective; ill-conditioned
    // K at large `a` puts the attainable gradient norm just above `tol`
    let floor = 1e-6 * (n as f64).sqrt();
    let mut cur = state(k, y, vec![0.0; n]);
    let mut trace = vec![cur.objective];
    let mut iters = 0;
    let mut converged = false;
    let gnorm = loop {
        let p: Vec<f64> = cur.f.iter().map(|&v| logistic(v)).collect();
        let grad: Vec<f64> = y.iter().zip(&p).map(|(&yi, pi)| yi as f64 - pi).collect();
        let gnorm = grad.iter().zip(&cur.alpha).map(|(g, a)| (g - a).powi(2)).sum::<f64>().sqrt();
        if gnorm <= tol {
            converged = true;
            break gnorm;
        }
        if iters >= MAX_NEWTON {
            break gnorm;
        }
        iters += 1;
        let w: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let l = chol_b(k, &sw)?;
        // b = W f + grad;  alpha_new = b - W^{1/2} B^{-1} W^{1/2} K b
        let b: Vec<f64> = (0..n).map(|i| w[i] * cur.f[i] + grad[i]).collect();
        let kb = mat_vec(k, &b);
        let mut t: Vec<f64> = (0..n).map(|i| sw[i] * kb[i]).collect();
        kernel::forward_solve(&l, &mut t);
        kernel::backward_solve(&l, &mut t);
        let proposal: Vec<f64> = (0..n).map(|i| b[i] - sw[i] * t[i]).collect();
        let mut next = state(k, y, proposal);
        let mut halvings = 0;
        while next.objective < cur.objective && halvings < 30 {
            let mid: Vec<f64> = cur.alpha.iter().zip(&next.alpha).map(|(u, v)| 0.5 * (u + v)).collect();
            next = state(k, y, mid);
            halvings += 1;
        }
        if next.objective <= cur.objective {
            converged = gnorm <= floor;
            break gnorm;
        }
        cur = next;
        trace.push(cur.objective);
    };
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Laplace mode search did not converge at a = {a} after {iters} Newton steps \
             (gradient norm {gnorm:.3e}, tolerance {tol:.1e}, stall floor {floor:.1e}, |alpha| {:.3e})",
            cur.alpha.iter().map(|v| v * v).sum::<f64>().sqrt()
        )));
    }
    let p: Vec<f64> = cur.f.iter().map(|&v| logistic(v)).collect();
    let grad: Vec<f64> = y.iter().zip(&p).map(|(&yi, pi)| yi as f64 - pi).collect();
    let sw: Vec<f64> = p.iter().map(|pi| (pi * (1.0 - pi)).sqrt()).collect();
    let l = chol_b(k, &sw)?;
    let logdet_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    Ok(LaplaceFit {
        a,
        approx_log_marginal: cur.objective - logdet_half,
        mode: cur.f,
        grad,
        newton_iters: iters,
        converged,
        objective_trace: trace,
        chol_b: l,
    })
}

/// Laplace approximation at scale `a`.
pub fn laplace_fit(data: &ClassificationData, a: f64) -> Result<LaplaceFit> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("scale must be positive, got {a}")));
    }
    laplace_with_gram(data, a, &kernel::gram(&data.x, a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierFit {
    pub a_hat: f64,
    pub a_at_boundary: bool,
    pub standard: LaplaceFit,
    /// Refit at `a_hat log n`.
    pub rescaled: LaplaceFit,
}

/// Maximises the Laplace evidence over a log grid in `a` (the noise fields of
/// `bounds` are unused), then refits at `a_hat log n`.
pub fn fit_classifier(data: &ClassificationData, bounds: &SearchBounds) -> Result<ClassifierFit> {
    if data.is_degenerate() {
        return Err(invalid("both classes must be present"));
    }
    if !(bounds.a_min > 0.0 && bounds.a_max > bounds.a_min) || bounds.a_points < 3 {
        return Err(invalid("bad scale bounds"));
    }
    let grid = log_grid(bounds.a_min, bounds.a_max, bounds.a_points);
    let vals = exec::try_map_indexed(grid.len(), |j| laplace_fit(data, grid[j]).map(|f| f.approx_log_marginal))?;
    let k = argmax(&vals).ok_or_else(|| Error::NumericalFailure("Laplace evidence not finite".into()))?;
    let last = grid.len() - 1;
    let mut failure = None;
    let (a_ref, v_ref) = golden_max(
        |a| match laplace_fit(data, a) {
            Ok(f) => f.approx_log_marginal,
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
    let a_hat = if v_ref >= vals[k] { a_ref } else { grid[k] };
    let standard = laplace_fit(data, a_hat)?;
    let rescaled = laplace_fit(data, a_hat * (data.len() as f64).ln())?;
    Ok(ClassifierFit { a_hat, a_at_boundary: k == 0 || k == last, standard, rescaled })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentPrediction {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Laplace predictive mean and variance of the latent function.
pub fn predict_latent(fit: &LaplaceFit, data: &ClassificationData, at: &[f64]) -> LatentPrediction {
    let sw: Vec<f64> = fit.mode.iter().map(|&v| {
        let p = logistic(v);
        (p * (1.0 - p)).sqrt()
    }).collect();
    let rows = exec::map_slice(at, |&t| {
        let ks = kernel::cross(&data.x, fit.a, t);
        let mean = ks.iter().zip(&fit.grad).map(|(u, v)| u * v).sum::<f64>();
        let mut v: Vec<f64> = ks.iter().zip(&sw).map(|(u, s)| u * s).collect();
        kernel::forward_solve(&fit.chol_b, &mut v);
        let var = (1.0 - v.iter().map(|z| z * z).sum::<f64>()).max(0.0);
        (mean, var)
    });
    let (mean, var) = rows.into_iter().unzip();
    LatentPrediction { x: at.to_vec(), mean, var }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentIntervals {
    pub method: Method,
    pub a: f64,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl LatentIntervals {
    pub fn contains(&self, k: usize, value: f64) -> bool {
        (value - self.mean[k]).abs() <= self.half_width[k]
    }
}

pub fn method_intervals(fit: &ClassifierFit, data: &ClassificationData, at: &[f64]) -> Vec<LatentIntervals> {
    let log_n = (data.len() as f64).ln();
    let base = predict_latent(&fit.standard, data, at);
    let rescaled = predict_latent(&fit.rescaled, data, at);
    let hw = |p: &LatentPrediction, infl: f64| p.var.iter().map(|v| infl * Q975 * v.sqrt()).collect::<Vec<_>>();
    let (hw1, hw2, hw3) = (hw(&base, 1.0), hw(&base, log_n), hw(&rescaled, 1.0));
    vec![
        LatentIntervals { method: Method::M1, a: fit.a_hat, x: at.to_vec(), mean: base.mean.clone(), half_width: hw1 },
        LatentIntervals { method: Method::M2, a: fit.a_hat, x: at.to_vec(), mean: base.mean, half_width: hw2 },
        LatentIntervals { method: Method::M3, a: fit.rescaled.a, x: at.to_vec(), mean: rescaled.mean, half_width: hw3 },
    ]
}

/// Rows `(method, x, mean, lower, upper, prob)` with `prob = psi(mean)`.
pub fn write_intervals_csv<W: Write>(sets: &[LatentIntervals], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "x", "mean", "lower", "upper", "prob"])?;
    for s in sets {
        for k in 0..s.x.len() {
            w.write_record([
                s.method.label().to_string(),
                format!("{:.6}", s.x[k]),
                format!("{:.10e}", s.mean[k]),
                format!("{:.10e}", s.mean[k] - s.half_width[k]),
                format!("{:.10e}", s.mean[k] + s.half_width[k]),
                format!("{:.10e}", logistic(s.mean[k])),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
