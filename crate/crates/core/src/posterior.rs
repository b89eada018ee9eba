//! Conjugate posterior for a fixed prior scale.
//!
//! Under `f_i ~ N(0, v_i)` and `Y_i | f ~ N(f_i, 1/n)` the posterior is
//! `N(n Y_i / tau_i, 1 / tau_i)` with `tau_i = 1/v_i + n`. Everything is
//! carried in log-precisions, `log tau_i = logaddexp(log(1/v_i), log n)`, so
//! `a e^{i/a}` never overflows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec;
use crate::gwn::ObservedSequence;
use crate::numeric::{log_add_exp, logistic, CompensatedSum};
use crate::rng;
use crate::signals::SequenceSignal;

/// Below this value of `n v_i` a coordinate carries no information: its
/// posterior mean is set to zero and its variance to the prior variance.
pub const NEGLIGIBLE_INFORMATION: f64 = 1e-16;

/// Default truncation margin `T` in `i*(a) = ceil(a (log(n/a) + T))`.
pub const DEFAULT_MARGIN: f64 = 40.0;

const BIAS_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum PriorSpec {
    /// `v_i = a^{-1} exp(-i/a)`, `a >= 1`.
    Exponential { a: f64 },
    /// `v_i = i^{-1-2 alpha}`.
    Polynomial { alpha: f64 },
}

impl PriorSpec {
    pub fn exponential(a: f64) -> Result<Self> {
        let p = PriorSpec::Exponential { a };
        p.validate()?;
        Ok(p)
    }

    pub fn polynomial(alpha: f64) -> Result<Self> {
        let p = PriorSpec::Polynomial { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::Exponential { a } if a >= 1.0 && a.is_finite() => Ok(()),
            PriorSpec::Polynomial { alpha } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            p => Err(invalid(format!("invalid prior {p:?}"))),
        }
    }

    /// `log(1 / v_i)`.
    #[inline]
    pub fn log_prior_precision(&self, i: usize) -> f64 {
        match *self {
            PriorSpec::Exponential { a } => a.ln() + i as f64 / a,
            PriorSpec::Polynomial { alpha } => (1.0 + 2.0 * alpha) * (i as f64).ln(),
        }
    }

    /// `log tau_i`.
    #[inline]
    pub fn log_precision(&self, i: usize, n: f64) -> f64 {
        log_add_exp(self.log_prior_precision(i), n.ln())
    }

    /// Shrinkage weight `n / tau_i`, the factor mapping `Y_i` to the mean.
    #[inline]
    pub fn data_weight(&self, i: usize, n: f64) -> f64 {
        let z = n.ln() - self.log_prior_precision(i);
        if z < NEGLIGIBLE_INFORMATION.ln() {
            0.0
        } else {
            logistic(z)
        }
    }

    /// Posterior variance `1 / tau_i`.
    #[inline]
    pub fn posterior_variance(&self, i: usize, n: f64) -> f64 {
        (-self.log_precision(i, n)).exp()
    }

    /// First index at which `n v_i < NEGLIGIBLE_INFORMATION`.
    pub fn information_cutoff(&self, n: f64) -> usize {
        let target = n.ln() - NEGLIGIBLE_INFORMATION.ln();
        let i = match *self {
            PriorSpec::Exponential { a } => a * (target - a.ln()),
            PriorSpec::Polynomial { alpha } => (target / (1.0 + 2.0 * alpha)).exp(),
        };
        if i < 1.0 {
            1
        } else if i > 1e15 {
            usize::MAX / 4
        } else {
            i.ceil() as usize + 1
        }
    }
}

/// `i*(a) = ceil(a (log(n/a) + T))`, the index past which `a e^{i/a} > n e^T`.
pub fn truncation_index(a: f64, n: f64, margin: f64) -> usize {
    (a * ((n / a).ln().max(0.0) + margin)).ceil().max(1.0) as usize
}

/// Coordinate-wise Gaussian posterior for one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPosterior {
    pub prior: PriorSpec,
    pub n: f64,
    pub means: Vec<f64>,
    pub log_precisions: Vec<f64>,
}

impl ScaledPosterior {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Posterior variances `1 / tau_i`.
    pub fn variances(&self) -> Vec<f64> {
        self.log_precisions.iter().map(|l| (-l).exp()).collect()
    }
}

pub fn posterior(y: &ObservedSequence, prior: PriorSpec) -> Result<ScaledPosterior> {
    prior.validate()?;
    let n = y.n;
    let (means, log_precisions) = (1..=y.len())
        .map(|i| {
            let lpp = prior.log_prior_precision(i);
            let w = prior.data_weight(i, n);
            let lp = if w == 0.0 { lpp } else { log_add_exp(lpp, n.ln()) };
            (w * y.get(i), lp)
        })
        .unzip();
    Ok(ScaledPosterior { prior, n, means, log_precisions })
}

/// `||fhat - f0||_2^2`: stored coordinates explicitly, the rest of the truth
/// through its tail energy (the mean is zero there).
pub fn posterior_mean_sq_error(post: &ScaledPosterior, truth: &SequenceSignal) -> f64 {
    let mut acc: CompensatedSum = post
        .means
        .iter()
        .enumerate()
        .map(|(k, m)| (m - truth.coefficient(k + 1)).powi(2))
        .collect();
    acc.add(truth.tail_energy(post.len()));
    acc.value()
}

/// A value known to lie within `value +- half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracketed {
    pub value: f64,
    pub half_width: f64,
}

impl Bracketed {
    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }
}

/// `||B(a, f0)||^2 = sum_i (a e^{i/a} f_i / (a e^{i/a} + n))^2` under the
/// exponential prior.
///
/// Explicit up to `max(stored length, i*(a))` (at most `BIAS_TERMS` past the
/// stored length); beyond, the shrinkage factor lies in `[1 - eps, 1]` with
/// `eps = n / (a e^{(m+1)/a})`, which brackets the remaining bias energy.
pub fn bias_norm_sq(a: f64, n: f64, truth: &SequenceSignal, margin: f64) -> Result<Bracketed> {
    let prior = PriorSpec::exponential(a)?;
    let m = truth.len().max(truncation_index(a, n, margin).min(truth.len() + BIAS_TERMS));
    let mut acc = CompensatedSum::new();
    for i in 1..=m {
        let keep = 1.0 - prior.data_weight(i, n);
        acc.add(keep * keep * truth.energy_at(i));
    }
    let rest = truth.tail_energy(m);
    let eps = (n.ln() - prior.log_prior_precision(m + 1)).exp().min(1.0);
    let lo = rest * (1.0 - eps).powi(2);
    Ok(Bracketed { value: acc.value() + 0.5 * (lo + rest), half_width: 0.5 * (rest - lo) })
}

/// `n / (a e^{i/a} + n)^2` for `i <= i*(a)`: the variance of the centred
/// posterior mean coordinates.
pub fn variance_profile(a: f64, n: f64, margin: f64) -> Result<Vec<f64>> {
    let prior = PriorSpec::exponential(a)?;
    let m = truncation_index(a, n, margin);
    Ok((1..=m)
        .map(|i| {
            let s = prior.data_weight(i, n);
            s * s / n
        })
        .collect())
}

/// `count` independent posterior draws, each of the posterior's length.
/// Draw `k` uses the stream derived from `(seed, k)`.
pub fn sample(post: &ScaledPosterior, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count < 1 {
        return Err(invalid("sample count must be at least 1"));
    }
    let sd: Vec<f64> = post.log_precisions.iter().map(|l| (-0.5 * l).exp()).collect();
    Ok(exec::map_indexed(count, |k| {
        let mut g = rng::substream(seed, &[k as u64]);
        post.means
            .iter()
            .zip(&sd)
            .map(|(m, s)| m + s * g.sample::<f64, _>(StandardNormal))
            .collect()
    }))
}
