//! Hierarchical prior over the scale `a`: hyper-prior families restricted to
//! `[1, A_n]`, the hyper-posterior on a quadrature grid and the resulting
//! mixture posterior.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::gwn::ObservedSequence;
use crate::mmle::{self, MmleConfig};
use crate::numeric::{log_add_exp, log_grid};
use crate::posterior::{PriorSpec, DEFAULT_MARGIN};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperFamily {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
}

impl Default for HyperFamily {
    fn default() -> Self {
        HyperFamily::Exponential { rate: 1.0 }
    }
}

impl HyperFamily {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HyperFamily::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            HyperFamily::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            HyperFamily::InverseGamma { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid hyper-prior parameters {self:?}")))
        }
    }

    /// Unnormalised log density.
    fn log_kernel(&self, a: f64) -> f64 {
        match *self {
            HyperFamily::Exponential { rate } => -rate * a,
            HyperFamily::Gamma { shape, rate } => (shape - 1.0) * a.ln() - rate * a,
            HyperFamily::InverseGamma { shape, scale } => -(shape + 1.0) * a.ln() - scale / a,
        }
    }
}

/// Constants of the two-sided bound
/// `c4^{-1} a^{-c3} e^{-c2 a} <= pi(a) <= c4 a^{-c5} e^{-c6 a}` for `a >= c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

impl Envelope {
    pub fn lower(&self, a: f64) -> f64 {
        self.log_lower(a).exp()
    }

    pub fn upper(&self, a: f64) -> f64 {
        self.log_upper(a).exp()
    }

    pub fn log_lower(&self, a: f64) -> f64 {
        -self.c3 * a.ln() - self.c2 * a - self.c4.ln()
    }

    pub fn log_upper(&self, a: f64) -> f64 {
        self.c4.ln() - self.c5 * a.ln() - self.c6 * a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub family: HyperFamily,
    pub lower: f64,
    pub upper: f64,
    pub log_normalizer: f64,
}

const NORMALIZER_NODES: usize = 20_001;

impl HyperPrior {
    pub fn new(family: HyperFamily, lower: f64, upper: f64) -> Result<Self> {
        family.validate()?;
        if !(lower >= 1.0 && upper > lower && upper.is_finite()) {
            return Err(invalid(format!("hyper-prior support [{lower}, {upper}] must satisfy 1 <= lo < hi")));
        }
        // trapezoid in t = log a, integrand exp(log_kernel(e^t) + t)
        let (t0, t1) = (lower.ln(), upper.ln());
        let h = (t1 - t0) / (NORMALIZER_NODES - 1) as f64;
        let mut acc = f64::NEG_INFINITY;
        for k in 0..NORMALIZER_NODES {
            let t = if k == NORMALIZER_NODES - 1 { t1 } else { t0 + h * k as f64 };
            let w: f64 = if k == 0 || k == NORMALIZER_NODES - 1 { 0.5 } else { 1.0 };
            acc = log_add_exp(acc, family.log_kernel(t.exp()) + t + w.ln());
        }
        Ok(HyperPrior { family, lower, upper, log_normalizer: acc + h.ln() })
    }

    /// Restriction to `[1, A_n]` under the default upper-endpoint rule.
    pub fn for_n(family: HyperFamily, n: f64) -> Result<Self> {
        HyperPrior::new(family, 1.0, MmleConfig::default().upper_endpoint(n)?)
    }

    pub fn log_density(&self, a: f64) -> f64 {
        if a < self.lower || a > self.upper {
            f64::NEG_INFINITY
        } else {
            self.family.log_kernel(a) - self.log_normalizer
        }
    }

    pub fn envelope(&self) -> Envelope {
        let z = self.log_normalizer.exp();
        let (c2, c3, c5, c6, lo_factor, hi_factor) = match self.family {
            HyperFamily::Exponential { rate } => (rate, 0.0, 0.0, rate, z, 1.0 / z),
            // a^{k-1} >= a^{-c3} with c3 = max(1-k, 0) + 1, and
            // a^{k} e^{-rate a / 2} <= (2k / (e rate))^k
            HyperFamily::Gamma { shape, rate } => (
                rate,
                (1.0 - shape).max(0.0) + 1.0,
                1.0,
                rate / 2.0,
                z,
                (2.0 * shape / (std::f64::consts::E * rate)).powf(shape) / z,
            ),
            // e^{-scale/a} lies in [e^{-scale}, 1] on a >= 1
            HyperFamily::InverseGamma { shape, scale } => (0.0, shape + 1.0, shape + 1.0, 0.0, z * scale.exp(), 1.0 / z),
        };
        Envelope { c1: 1.0, c2, c3, c4: lo_factor.max(hi_factor).max(1.0), c5, c6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPosterior {
    pub grid: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Trapezoid cell widths of a sorted grid.
fn trapezoid_widths(grid: &[f64]) -> Vec<f64> {
    let k = grid.len();
    (0..k)
        .map(|j| {
            let left = if j == 0 { grid[0] } else { grid[j - 1] };
            let right = if j + 1 == k { grid[k - 1] } else { grid[j + 1] };
            0.5 * (right - left)
        })
        .collect()
}

pub fn hyper_posterior(y: &ObservedSequence, prior: &HyperPrior, grid_size: usize) -> Result<HyperPosterior> {
    if grid_size < 2 {
        return Err(invalid("hyper-posterior grid needs at least 2 points"));
    }
    let grid = log_grid(prior.lower, prior.upper, grid_size);
    let ll = exec::try_map_indexed(grid.len(), |j| {
        mmle::log_marginal_likelihood_unbounded(y, grid[j], DEFAULT_MARGIN)
    })?;
    if let Some(j) = ll.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!("log-likelihood not finite at a = {}", grid[j])));
    }
    let raw: Vec<f64> = trapezoid_widths(&grid)
        .iter()
        .zip(&grid)
        .zip(&ll)
        .map(|((d, &a), l)| l + prior.log_density(a) + d.ln())
        .collect();
    let top = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_total = raw.iter().fold(f64::NEG_INFINITY, |acc, r| log_add_exp(acc, r - top)) + top;
    let log_weights: Vec<f64> = raw.iter().map(|r| r - log_total).collect();
    let weights = log_weights.iter().map(|l| l.exp()).collect();
    Ok(HyperPosterior { grid, log_weights, weights })
}

impl HyperPosterior {
    /// A hyper-posterior with all mass at `a`.
    pub fn point_mass(a: f64) -> Self {
        HyperPosterior { grid: vec![a], log_weights: vec![0.0], weights: vec![1.0] }
    }

    pub fn mean_a(&self) -> f64 {
        self.grid.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Mass of `[lo, hi]` on the grid.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| **a >= lo && **a <= hi)
            .map(|(_, w)| w)
            .sum()
    }

    /// Grid indices carrying non-negligible weight.
    pub(crate) fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > 1e-300).map(|(j, _)| j)
    }

    /// Index with cumulative weight first exceeding `u`.
    pub(crate) fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        self.support().last().unwrap_or(self.weights.len() - 1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "weight"])?;
        for (a, wt) in self.grid.iter().zip(&self.weights) {
            w.write_record([format!("{a:.10e}"), format!("{wt:.10e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `sum_j w_j mu(a_j)`, coordinate-wise.
pub fn hb_posterior_mean(y: &ObservedSequence, hpost: &HyperPosterior) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for j in hpost.support() {
        let prior = PriorSpec::Exponential { a: hpost.grid[j] };
        let w = hpost.weights[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * prior.data_weight(i + 1, y.n) * y.get(i + 1);
        }
    }
    out
}

/// Draws the first `len` coordinates of one mixture-posterior draw.
pub(crate) fn hb_draw_into(y: &ObservedSequence, hpost: &HyperPosterior, g: &mut rng::StreamRng, out: &mut [f64]) {
    let j = hpost.pick(g.random::<f64>());
    let prior = PriorSpec::Exponential { a: hpost.grid[j] };
    for (k, o) in out.iter_mut().enumerate() {
        let i = k + 1;
        let mean = prior.data_weight(i, y.n) * y.get(i);
        let sd = (-0.5 * prior.log_precision(i, y.n)).exp();
        *o = mean + sd * g.sample::<f64, _>(StandardNormal);
    }
}

/// Mixture draws: grid index from the weights, then a Gaussian draw from the
/// posterior at that scale. Draw `k` uses the stream derived from `(seed, k)`.
pub fn hb_sample(y: &ObservedSequence, hpost: &HyperPosterior, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count < 1 {
        return Err(invalid("sample count must be at least 1"));
    }
    Ok(exec::map_indexed(count, |k| {
        let mut g = rng::substream(seed, &[k as u64]);
        let mut v = vec![0.0; y.len()];
        hb_draw_into(y, hpost, &mut g, &mut v);
        v
    }))
}
