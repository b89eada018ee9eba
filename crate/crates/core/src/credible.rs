//! Credible balls around a posterior mean: Monte Carlo radii, inflation,
//! coverage checks and plotting bands.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec;
use crate::gwn::ObservedSequence;
use crate::hb::{self, HyperPosterior};
use crate::numeric::{hurwitz_zeta, upper_order_statistic, CompensatedSum};
use crate::posterior::{PriorSpec, ScaledPosterior};
use crate::rng;
use crate::signals::{synthesize_at, BasisGrid, SequenceSignal};

/// Default number of Monte Carlo draws per radius.
pub const DEFAULT_DRAWS: usize = 2000;

/// Coordinates beyond this cap are folded into the deterministic tail mean
/// (reached only by slowly decaying polynomial priors).
const MAX_RANDOM_COORDS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTruncation {
    /// Number of coordinates drawn at random.
    pub len: usize,
    /// `sum_{i > len} 1 / tau_i`.
    pub tail_mean: f64,
}

/// Cut where `1 / tau_i < 1e-16 / tau_1`.
pub fn variance_truncation(prior: &PriorSpec, n: f64) -> VarianceTruncation {
    let target = prior.log_precision(1, n) + 1e-16f64.ln().abs();
    let len = match *prior {
        PriorSpec::Exponential { a } => {
            // a e^{i/a} >= e^{target} is sufficient
            ((target - a.ln()) * a).ceil().max(1.0) as usize
        }
        PriorSpec::Polynomial { alpha } => {
            let i = (target / (1.0 + 2.0 * alpha)).exp().ceil();
            if i > MAX_RANDOM_COORDS as f64 {
                MAX_RANDOM_COORDS
            } else {
                i.max(1.0) as usize
            }
        }
    };
    let tail_mean = match *prior {
        PriorSpec::Exponential { a } => {
            let q = (-1.0 / a).exp();
            // prior variance dominates: 1/tau ~ a^{-1} e^{-i/a}
            q.powf(len as f64 + 1.0) / (a * (-(-1.0 / a).exp_m1()))
        }
        PriorSpec::Polynomial { alpha } => {
            let p = 1.0 + 2.0 * alpha;
            // 1 / (i^p + n) = i^{-p} - n i^{-2p} + ...
            hurwitz_zeta(p, len as f64 + 1.0) - n * hurwitz_zeta(2.0 * p, len as f64 + 1.0)
        }
    };
    VarianceTruncation { len, tail_mean: tail_mean.max(0.0) }
}

fn check_level(alpha: f64, draws: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if draws < 100 {
        return Err(invalid("at least 100 draws are required"));
    }
    Ok(())
}

/// Realisations of `U = sum_i Z_i^2 / tau_i`. Draw `k` uses the stream
/// derived from `(seed, k)` and consumes its normals in coordinate order.
pub fn u_draws(prior: &PriorSpec, n: f64, draws: usize, seed: u64) -> Vec<f64> {
    let tr = variance_truncation(prior, n);
    let var: Vec<f64> = (1..=tr.len).map(|i| prior.posterior_variance(i, n)).collect();
    exec::map_indexed(draws, |k| {
        let mut g = rng::substream(seed, &[k as u64]);
        let mut acc = CompensatedSum::new();
        for v in &var {
            let z: f64 = g.sample(StandardNormal);
            acc.add(v * z * z);
        }
        acc.add(tr.tail_mean);
        acc.value()
    })
}

/// `r_alpha` with `P(U < r^2) = 1 - alpha`, estimated by the order statistic
/// at `ceil((1 - alpha) draws)`.
pub fn radius(prior: &PriorSpec, n: f64, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    check_level(alpha, draws)?;
    prior.validate()?;
    let mut u = u_draws(prior, n, draws, seed);
    Ok(upper_order_statistic(&mut u, 1.0 - alpha).sqrt())
}

pub fn radius_fixed_a(a: f64, n: f64, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    radius(&PriorSpec::exponential(a)?, n, alpha, draws, seed)
}

/// Quantile of `||f - fhat_HB||` under the mixture posterior.
pub fn radius_hb(
    y: &ObservedSequence,
    hpost: &HyperPosterior,
    center: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_level(alpha, draws)?;
    let mut len = 0;
    let mut tail = 0.0;
    for (a, w) in hpost.grid.iter().zip(&hpost.weights) {
        if *w <= 1e-300 {
            continue;
        }
        let tr = variance_truncation(&PriorSpec::Exponential { a: *a }, y.n);
        len = len.max(tr.len);
        tail += w * tr.tail_mean;
    }
    let mut d = exec::map_indexed(draws, |k| {
        let mut g = rng::substream(seed, &[k as u64]);
        let mut v = vec![0.0; len];
        hb::hb_draw_into(y, hpost, &mut g, &mut v);
        let mut acc = CompensatedSum::new();
        for (i, vi) in v.iter().enumerate() {
            acc.add((vi - center.get(i).copied().unwrap_or(0.0)).powi(2));
        }
        for c in center.iter().skip(len) {
            acc.add(c * c);
        }
        acc.add(tail);
        acc.value()
    });
    Ok(upper_order_statistic(&mut d, 1.0 - alpha).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub inflation: f64,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
}

impl CredibleBall {
    pub fn new(center: Vec<f64>, radius: f64, inflation: f64, alpha: f64, mc_draws: usize, seed: u64) -> Result<Self> {
        if !(radius > 0.0) || !(inflation >= 1.0) {
            return Err(invalid("ball needs radius > 0 and inflation >= 1"));
        }
        Ok(CredibleBall { center, radius, inflation, alpha, mc_draws, seed })
    }

    pub fn with_inflation(&self, inflation: f64) -> Result<Self> {
        CredibleBall::new(self.center.clone(), self.radius, inflation, self.alpha, self.mc_draws, self.seed)
    }
}

/// `||f0 - center||^2`, with the truth's energy past the center added exactly.
pub fn distance_sq(center: &[f64], truth: &SequenceSignal) -> f64 {
    let mut acc: CompensatedSum =
        center.iter().enumerate().map(|(k, c)| (c - truth.coefficient(k + 1)).powi(2)).collect();
    acc.add(truth.tail_energy(center.len()));
    acc.value()
}

pub fn covers(ball: &CredibleBall, truth: &SequenceSignal) -> bool {
    distance_sq(&ball.center, truth) <= (ball.inflation * ball.radius).powi(2)
}

pub fn diameter(ball: &CredibleBall) -> f64 {
    2.0 * ball.inflation * ball.radius
}

fn synth_rows(rows: &[&[f64]], x: &[f64]) -> Vec<Vec<f64>> {
    exec::map_slice(rows, |c| x.iter().map(|&t| synthesize_at(c, t)).collect())
}

/// Pointwise envelope of the retained draws, on a basis grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Keeps the `ceil((1 - alpha) draws)` draws closest to the mean in `L2`,
/// synthesises them on the grid and takes pointwise extremes, inflated about
/// the synthesised mean by `inflation`.
pub fn band(
    post: &ScaledPosterior,
    truth: &SequenceSignal,
    grid: &BasisGrid,
    alpha: f64,
    inflation: f64,
    draws: usize,
    seed: u64,
) -> Result<Band> {
    check_level(alpha, draws)?;
    let kcap = grid.basis_size().min(post.len());
    let len = variance_truncation(&post.prior, post.n).len.min(kcap);
    let sd: Vec<f64> = post.log_precisions[..len].iter().map(|l| (-0.5 * l).exp()).collect();
    let samples = exec::map_indexed(draws, |k| {
        let mut g = rng::substream(seed, &[k as u64]);
        sd.iter().map(|s| s * g.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
    });
    let mut order: Vec<(f64, usize)> =
        samples.iter().enumerate().map(|(k, d)| (d.iter().map(|v| v * v).sum::<f64>(), k)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = ((1.0 - alpha) * draws as f64).ceil() as usize;
    let kept: Vec<&Vec<f64>> = order[..keep].iter().map(|&(_, k)| &samples[k]).collect();

    let x = grid.points().to_vec();
    let mean = synth_rows(&[&post.means[..kcap]], &x).remove(0);
    let truth_c = truth.extended(grid.basis_size());
    let truth_curve = synth_rows(&[&truth_c[..]], &x).remove(0);
    let curves = synth_rows(&kept.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), &x);
    let mut lower = vec![f64::INFINITY; x.len()];
    let mut upper = vec![f64::NEG_INFINITY; x.len()];
    for c in &curves {
        for (j, v) in c.iter().enumerate() {
            lower[j] = lower[j].min(*v);
            upper[j] = upper[j].max(*v);
        }
    }
    // deviations are centred at zero; shift by the mean and inflate
    for j in 0..x.len() {
        lower[j] = mean[j] + inflation * lower[j].min(0.0);
        upper[j] = mean[j] + inflation * upper[j].max(0.0);
    }
    Ok(Band { x, truth: truth_curve, mean, lower, upper })
}

impl Band {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "truth", "mean", "lower", "upper"])?;
        for j in 0..self.x.len() {
            w.write_record([
                format!("{:.6}", self.x[j]),
                format!("{:.10e}", self.truth[j]),
                format!("{:.10e}", self.mean[j]),
                format!("{:.10e}", self.lower[j]),
                format!("{:.10e}", self.upper[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gwn::simulate;
    use crate::hb::{hb_posterior_mean, hyper_posterior, HyperFamily, HyperPrior};
    use crate::posterior::posterior;
    use crate::signals::{make_f2, make_selfsimilar};

    #[test]
    fn quantile_ordering() {
        let p = PriorSpec::exponential(5.0).unwrap();
        let lo = radius(&p, 1e3, 0.999, 100_000, 1).unwrap();
        let mut u = u_draws(&p, 1e3, 100_000, 1);
        let med = crate::numeric::median(&u);
        assert!(lo * lo < med);
        let hi = upper_order_statistic(&mut u, 0.95).sqrt();
        assert!(radius(&p, 1e3, 0.05, 100_000, 1).unwrap() == hi);
        assert!(radius(&p, 1e3, 0.2, 2000, 1).unwrap() < radius(&p, 1e3, 0.05, 2000, 1).unwrap());
    }

    #[test]
    fn mean_of_u_matches_closed_form() {
        let (a, n) = (8.0, 1e4);
        let p = PriorSpec::exponential(a).unwrap();
        let u = u_draws(&p, n, 20_000, 2);
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let sd = (u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (u.len() - 1) as f64).sqrt();
        let exact: f64 = (1..=5000).map(|i| 1.0 / (a * (i as f64 / a).exp() + n)).sum();
        assert!((mean - exact).abs() <= 3.0 * sd / (u.len() as f64).sqrt());
    }

    #[test]
    fn shared_noise_monotone_in_n() {
        let p = PriorSpec::exponential(3.0).unwrap();
        let (hi_n, lo_n) = (u_draws(&p, 1e4, 500, 3), u_draws(&p, 1e2, 500, 3));
        assert!(hi_n.iter().zip(&lo_n).all(|(a, b)| a < b));
    }

    #[test]
    fn large_sample_radius_is_close() {
        let p = PriorSpec::exponential(6.0).unwrap();
        let r1 = radius(&p, 1e4, 0.05, 2000, 4).unwrap();
        let r2 = radius(&p, 1e4, 0.05, 100_000, 4).unwrap();
        assert!((r1 / r2 - 1.0).abs() < 0.03);
        let s1 = radius(&p, 1e4, 0.05, 10_000, 5).unwrap();
        let s2 = radius(&p, 1e4, 0.05, 10_000, 6).unwrap();
        assert!((s1 / s2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn argument_checks() {
        assert!(radius_fixed_a(2.0, 1e3, 1.0, 2000, 1).is_err());
        assert!(radius_fixed_a(2.0, 1e3, 0.05, 50, 1).is_err());
    }

    #[test]
    fn coverage_logic() {
        let f = make_selfsimilar(1.0, 1.0, 300).unwrap();
        // only the unstored tail separates the centre from the truth
        let tail = f.tail_energy(300).sqrt();
        let ball = CredibleBall::new(f.coeffs().to_vec(), tail * (1.0 + 1e-9), 1.0, 0.05, 2000, 0).unwrap();
        assert!(covers(&ball, &f));
        let tight = CredibleBall::new(f.coeffs().to_vec(), tail * (1.0 - 1e-9), 1.0, 0.05, 2000, 0).unwrap();
        assert!(!covers(&tight, &f));
        let off = CredibleBall::new(vec![0.0; 300], 0.1, 1.0, 0.05, 2000, 0).unwrap();
        let wide = off.with_inflation(20.0).unwrap();
        assert!(!covers(&off, &f) && covers(&wide, &f));
        let g = make_f2(200).unwrap();
        let gp = SequenceSignal::new("pad", [g.coeffs(), &[0.0; 50][..]].concat(), g.tail()).unwrap();
        let b2 = CredibleBall::new(vec![0.5; 100], 0.8, 1.0, 0.05, 2000, 0).unwrap();
        assert_eq!(covers(&b2, &g), covers(&b2, &gp));
        for (r, l) in [(0.3, 1.0), (0.3, 2.0), (0.3, 4.0f64.ln().max(1.0))] {
            let b = CredibleBall::new(vec![], r, l, 0.05, 2000, 0).unwrap();
            assert_eq!(diameter(&b), 2.0 * l * r);
        }
    }

    #[test]
    fn degenerate_hb_radius_matches_fixed() {
        let f = make_selfsimilar(1.0, 1.0, 2000).unwrap();
        let y = simulate(&f, 1e4, 2000, 7).unwrap();
        let point = HyperPosterior::point_mass(5.0);
        let center = hb_posterior_mean(&y, &point);
        let r_hb = radius_hb(&y, &point, &center, 0.05, 10_000, 8).unwrap();
        let r = radius_fixed_a(5.0, 1e4, 0.05, 10_000, 9).unwrap();
        assert!((r_hb / r - 1.0).abs() < 0.03);

        let hp = hyper_posterior(&y, &HyperPrior::for_n(HyperFamily::default(), 1e4).unwrap(), 200).unwrap();
        let c = hb_posterior_mean(&y, &hp);
        let wide = radius_hb(&y, &hp, &c, 0.05, 2000, 10).unwrap();
        let narrow = radius_hb(&y, &hp, &c, 0.3, 2000, 10).unwrap();
        assert!(narrow < wide);
    }

    #[test]
    fn band_contains_mean() {
        let f = make_f2(2000).unwrap();
        let y = simulate(&f, 500.0, 2000, 11).unwrap();
        let post = posterior(&y, PriorSpec::exponential(4.0).unwrap()).unwrap();
        let grid = BasisGrid::uniform(0.25, 0.4, 31, 2000).unwrap();
        let b = band(&post, &f, &grid, 0.05, 1.0, 400, 12).unwrap();
        for j in 0..31 {
            assert!(b.lower[j] <= b.mean[j] && b.mean[j] <= b.upper[j]);
        }
        let wide = band(&post, &f, &grid, 0.05, 3.0, 400, 12).unwrap();
        assert!((0..31).all(|j| wide.upper[j] - wide.lower[j] >= b.upper[j] - b.lower[j]));
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 32);
    }
}
