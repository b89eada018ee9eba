//! Scalar numerics shared across modules: stable log-domain helpers,
//! compensated summation, golden-section search, log-spaced grids, the
//! Hurwitz zeta function and a least-squares slope.

/// Upper 2.5% point of the standard normal distribution.
pub const Q975: f64 = 1.959_963_984_540_054;

/// `log(exp(x) + exp(y))` without overflow.
#[inline]
pub fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(1 + exp(x))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-x))`.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn stable_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `k` log-spaced points from `lo` to `hi` inclusive (`k >= 2`, `0 < lo <= hi`).
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    assert!(k >= 2 && lo > 0.0 && hi >= lo);
    let (l0, l1) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..k)
        .map(|j| (l0 + (l1 - l0) * j as f64 / (k - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[k - 1] = hi;
    g
}

/// Golden-section maximisation of `f` on `[lo, hi]`.
///
/// Stops when the bracket width falls below `rel_tol * max(|x|, 1e-300)` or
/// after `max_iter` shrink steps. Returns the best point evaluated and its
/// value.
pub fn golden_max<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..max_iter {
        if (b - a) <= rel_tol * best.0.abs().max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Index of the largest finite value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some(j) if values[j] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Hurwitz zeta `sum_{k >= 0} (q + k)^{-s}` for `s > 1`, `q > 0`.
///
/// Explicit terms until the base reaches 32, then Euler–Maclaurin with eight
/// Bernoulli corrections; the remainder is below `1e-15` relative.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    assert!(s > 1.0 && q > 0.0, "hurwitz_zeta needs s > 1, q > 0");
    let mut acc = CompensatedSum::new();
    let mut m = q;
    while m < 32.0 {
        acc.add(m.powf(-s));
        m += 1.0;
    }
    acc.add(m.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * m.powf(-s));
    // rising factorial s (s+1) ... (s + 2j - 2) / (2j)!
    let mut coef = s / 2.0;
    let mut pow = m.powf(-s - 1.0);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        acc.add(b * coef * pow);
        let k = 2.0 * (j as f64 + 1.0);
        coef *= (s + k - 1.0) * (s + k) / ((k + 1.0) * (k + 2.0));
        pow /= m * m;
    }
    acc.value()
}

/// Ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for two points or an exact fit).
    pub slope_se: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let k = x.len();
    if k < 2 || y.len() != k {
        return None;
    }
    let mx = x.iter().sum::<f64>() / k as f64;
    let my = y.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if k > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (k as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit { slope, intercept, slope_se })
}

/// Conservative empirical quantile: the order statistic at 1-based index
/// `ceil(p * len)`. Sorts `values` in place.
pub fn upper_order_statistic(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let idx = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[idx - 1]
}

/// Median of a slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hurwitz_matches_brute_force() {
        for &(s, q) in &[(3.0, 1.0), (2.0, 5.0), (1.5, 40.0), (4.0, 2001.0)] {
            // brute force plus integral remainder beyond 2e6 terms
            let m = 2_000_000.0;
            let mut acc = CompensatedSum::new();
            let mut k = 0.0_f64;
            while q + k < m {
                acc.add((q + k).powf(-s));
                k += 1.0;
            }
            let tail = (q + k).powf(1.0 - s) / (s - 1.0) + 0.5 * (q + k).powf(-s);
            assert_relative_eq!(hurwitz_zeta(s, q), acc.value() + tail, max_relative = 1e-11);
        }
        // zeta(2) = pi^2 / 6
        assert_relative_eq!(
            hurwitz_zeta(2.0, 1.0),
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|x| -(x - 2.5f64).powi(2), 0.0, 10.0, 1e-10, 200);
        assert_relative_eq!(x, 2.5, max_relative = 1e-8);
        assert!(fx <= 0.0 && fx > -1e-15);
    }

    #[test]
    fn stable_helpers() {
        assert_relative_eq!(log_add_exp(1000.0, 1000.0), 1000.0 + 2f64.ln());
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert_relative_eq!(softplus(0.0), 2f64.ln());
        assert_relative_eq!(softplus(800.0), 800.0);
        for &x in &[-40.0, -3.0, 0.0, 2.0, 50.0] {
            assert!((logistic(x) + logistic(-x) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn line_fit_is_exact_for_power_law() {
        let ns = [1e3, 1e4, 1e5, 1e6];
        let x: Vec<f64> = ns.iter().map(|n: &f64| n.ln()).collect();
        let y: Vec<f64> = ns.iter().map(|n: &f64| n.powf(-1.0 / 3.0).ln()).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-12);
    }

    #[test]
    fn order_statistic_convention() {
        let mut v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(upper_order_statistic(&mut v, 0.95), 95.0);
        let mut v = vec![3.0, 1.0, 2.0];
        assert_eq!(upper_order_statistic(&mut v, 0.5), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1000.0, 4);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[3], 1000.0);
        assert_relative_eq!(g[1], 10.0, max_relative = 1e-12);
    }
}
