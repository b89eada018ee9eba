//! Truth signals in coefficient space, their function-class memberships and
//! synthesis in the cosine basis `psi_i(t) = sqrt(2) cos(pi (i - 1/2) t)`.
//!
//! A [`SequenceSignal`] is an infinite sequence: explicitly stored leading
//! coefficients plus a [`Tail`] descriptor giving the squared coefficients
//! beyond the stored range in closed form. Tail coefficients are taken with
//! positive sign.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{hurwitz_zeta, CompensatedSum};

/// Number of stored coefficients used by the stock truths.
pub const DEFAULT_LENGTH: usize = 2000;

/// Squared coefficients for indices beyond the stored range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Tail {
    Zero,
    /// `f_i^2 = c i^{-1-2 beta}`.
    Power { c: f64, beta: f64 },
    /// `f_i^2 = c exp(-2 gamma i)`.
    Exp { c: f64, gamma: f64 },
}

impl Tail {
    fn validate(&self) -> Result<()> {
        match *self {
            Tail::Zero => Ok(()),
            Tail::Power { c, beta } if c > 0.0 && beta > 0.0 && c.is_finite() && beta.is_finite() => Ok(()),
            Tail::Exp { c, gamma } if c > 0.0 && gamma > 0.0 && c.is_finite() && gamma.is_finite() => Ok(()),
            t => Err(invalid(format!("tail parameters must be finite and positive: {t:?}"))),
        }
    }

    /// `f_i^2` under the descriptor.
    pub fn energy_at(&self, i: usize) -> f64 {
        let x = i as f64;
        match *self {
            Tail::Zero => 0.0,
            Tail::Power { c, beta } => c * x.powf(-1.0 - 2.0 * beta),
            Tail::Exp { c, gamma } => c * (-2.0 * gamma * x).exp(),
        }
    }

    /// `sum_{i > k} f_i^2` under the descriptor.
    pub fn energy_beyond(&self, k: usize) -> f64 {
        match *self {
            Tail::Zero => 0.0,
            Tail::Power { c, beta } => c * hurwitz_zeta(1.0 + 2.0 * beta, k as f64 + 1.0),
            Tail::Exp { c, gamma } => {
                c * (-2.0 * gamma * (k as f64 + 1.0)).exp() / -(-2.0 * gamma).exp_m1()
            }
        }
    }
}

/// A truth `f_0` in sequence form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal")]
pub struct SequenceSignal {
    pub label: String,
    coeffs: Vec<f64>,
    tail: Tail,
}

#[derive(Deserialize)]
struct RawSignal {
    label: String,
    coeffs: Vec<f64>,
    tail: Tail,
}

impl TryFrom<RawSignal> for SequenceSignal {
    type Error = Error;

    fn try_from(raw: RawSignal) -> Result<Self> {
        SequenceSignal::new(raw.label, raw.coeffs, raw.tail)
    }
}

impl SequenceSignal {
    pub fn new(label: impl Into<String>, coeffs: Vec<f64>, tail: Tail) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("a signal needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(invalid(format!("coefficient {} is not finite", i + 1)));
        }
        tail.validate()?;
        Ok(Self { label: label.into(), coeffs, tail })
    }

    /// The all-zero signal with `len` stored coefficients.
    pub fn zero(len: usize) -> Result<Self> {
        Self::new("zero", vec![0.0; len], Tail::Zero)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coefficient `f_i` (1-based), continuing into the tail with positive sign.
    pub fn coefficient(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        match self.coeffs.get(i - 1) {
            Some(&c) => c,
            None => self.tail.energy_at(i).sqrt(),
        }
    }

    /// `f_i^2` (1-based).
    pub fn energy_at(&self, i: usize) -> f64 {
        match self.coeffs.get(i - 1) {
            Some(&c) => c * c,
            None => self.tail.energy_at(i),
        }
    }

    /// First `len` coefficients, extending into the tail as needed.
    pub fn extended(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|i| self.coefficient(i)).collect()
    }

    /// `sum_{i > k} f_i^2`, exact up to the closed-form tail remainder.
    pub fn tail_energy(&self, k: usize) -> f64 {
        let n = self.coeffs.len();
        if k >= n {
            return self.tail.energy_beyond(k);
        }
        let mut acc: CompensatedSum = self.coeffs[k..].iter().map(|c| c * c).collect();
        acc.add(self.tail.energy_beyond(n));
        acc.value()
    }

    /// `||f||_2^2`.
    pub fn norm_sq(&self) -> f64 {
        self.tail_energy(0)
    }

    /// `alpha * self + other`, coefficient-wise over the longer stored range.
    /// Both tails must be zero.
    pub fn axpy(&self, alpha: f64, other: &SequenceSignal) -> Result<SequenceSignal> {
        if self.tail != Tail::Zero || other.tail != Tail::Zero {
            return Err(invalid("axpy is defined for zero-tail signals only"));
        }
        let len = self.len().max(other.len());
        let coeffs = (1..=len)
            .map(|i| alpha * self.coefficient(i) + other.coefficient(i))
            .collect();
        SequenceSignal::new(format!("{alpha}*{}+{}", self.label, other.label), coeffs, Tail::Zero)
    }
}

fn check_len(len: usize) -> Result<()> {
    if len < 1 {
        Err(invalid("signal length must be at least 1"))
    } else {
        Ok(())
    }
}

/// `f_{1,i} = i^{-3/2} sin(i)`, stored for `i <= len`, zero beyond.
pub fn make_f1(len: usize) -> Result<SequenceSignal> {
    check_len(len)?;
    let c = (1..=len).map(|i| (i as f64).powf(-1.5) * (i as f64).sin()).collect();
    SequenceSignal::new("f1", c, Tail::Zero)
}

/// `f_{2,i} = i^{-3/2} cos(i)`, stored for `i <= len`, zero beyond.
pub fn make_f2(len: usize) -> Result<SequenceSignal> {
    check_len(len)?;
    let c = (1..=len).map(|i| (i as f64).powf(-1.5) * (i as f64).cos()).collect();
    SequenceSignal::new("f2", c, Tail::Zero)
}

/// Self-similar signal `f_i = sqrt(c) i^{-(1+2 beta)/2}` for all `i`.
pub fn make_selfsimilar(beta: f64, c: f64, len: usize) -> Result<SequenceSignal> {
    check_len(len)?;
    if !(beta > 0.0 && c > 0.0) {
        return Err(invalid("self-similar signal needs beta > 0 and c > 0"));
    }
    let tail = Tail::Power { c, beta };
    let coeffs = (1..=len).map(|i| tail.energy_at(i).sqrt()).collect();
    SequenceSignal::new(format!("selfsimilar(beta={beta},c={c})"), coeffs, tail)
}

/// Analytic-type signal `f_i = sqrt(c) exp(-gamma i)` for all `i`.
pub fn make_analytic(gamma: f64, c: f64, len: usize) -> Result<SequenceSignal> {
    check_len(len)?;
    if !(gamma > 0.0 && c > 0.0) {
        return Err(invalid("analytic signal needs gamma > 0 and c > 0"));
    }
    let tail = Tail::Exp { c, gamma };
    let coeffs = (1..=len).map(|i| tail.energy_at(i).sqrt()).collect();
    SequenceSignal::new(format!("analytic(gamma={gamma},c={c})"), coeffs, tail)
}

/// Function classes the coverage results are stated over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionClassSpec {
    /// `sup_i i^{1+2 beta} f_i^2 <= m_upper`.
    HyperRectangle { beta: f64, m_upper: f64 },
    /// Hyper-rectangle with additionally `inf_i i^{1+2 beta} f_i^2 >= m_lower`.
    SelfSimilar { beta: f64, m_lower: f64, m_upper: f64 },
    /// `sum_i f_i^2 exp(2 gamma i) <= m_upper`.
    Analytic { gamma: f64, m_upper: f64 },
    /// `sum_{i >= N} f_i^2 <= l0 sum_{i=N}^{rho N} f_i^2` for every `N >= n0`.
    PolishedTail { l0: f64, n0: usize, rho: f64 },
}

impl FunctionClassSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let ok = match *self {
            Self::HyperRectangle { beta, m_upper } => pos(beta) && pos(m_upper),
            Self::SelfSimilar { beta, m_lower, m_upper } => {
                pos(beta) && pos(m_lower) && pos(m_upper) && m_lower <= m_upper
            }
            Self::Analytic { gamma, m_upper } => pos(gamma) && pos(m_upper),
            Self::PolishedTail { l0, n0, rho } => pos(l0) && n0 >= 1 && rho >= 1.0 && rho.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid function class parameters: {self:?}")))
        }
    }
}

/// Result of a membership check. `witness` is the first index (or block
/// start `N` for the polished-tail class) violating the defining inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub witness: Option<usize>,
}

impl Membership {
    fn yes() -> Self {
        Self { member: true, witness: None }
    }

    fn no(at: usize) -> Self {
        Self { member: false, witness: Some(at) }
    }
}

/// Relative slack for comparisons of closed-form quantities.
const REL_SLACK: f64 = 1e-12;

fn le(x: f64, y: f64) -> bool {
    x <= y * (1.0 + REL_SLACK) + f64::MIN_POSITIVE
}

/// Beyond this block start the polished-tail ratio is decided by its limit.
const POLISHED_SCAN_LIMIT: usize = 200_000;

pub fn check_membership(f: &SequenceSignal, spec: &FunctionClassSpec) -> Result<Membership> {
    spec.validate()?;
    match *spec {
        FunctionClassSpec::HyperRectangle { beta, m_upper } => Ok(weighted_sup(f, beta, m_upper)),
        FunctionClassSpec::SelfSimilar { beta, m_lower, m_upper } => {
            let upper = weighted_sup(f, beta, m_upper);
            if !upper.member {
                return Ok(upper);
            }
            Ok(weighted_inf(f, beta, m_lower))
        }
        FunctionClassSpec::Analytic { gamma, m_upper } => Ok(analytic_sum(f, gamma, m_upper)),
        FunctionClassSpec::PolishedTail { l0, n0, rho } => polished_tail(f, l0, n0, rho),
    }
}

/// Checks `i^{1+2 beta} f_i^2 <= bound` for all `i`.
fn weighted_sup(f: &SequenceSignal, beta: f64, bound: f64) -> Membership {
    let s = 1.0 + 2.0 * beta;
    let w = |i: usize| (i as f64).powf(s) * f.energy_at(i);
    if let Some(i) = (1..=f.len()).find(|&i| !le(w(i), bound)) {
        return Membership::no(i);
    }
    let first = f.len() + 1;
    match f.tail() {
        Tail::Zero => Membership::yes(),
        Tail::Power { c, beta: bt } => {
            // i^{s} c i^{-1-2 bt} = c i^{2 (beta - bt)}
            let e = 2.0 * (beta - bt);
            if e <= 0.0 {
                // non-increasing: the first tail index is the sup
                if le(w(first), bound) { Membership::yes() } else { Membership::no(first) }
            } else {
                // unbounded: smallest i with c i^e > bound
                let i = ((bound / c).powf(1.0 / e).floor() as usize + 1).max(first);
                let i = (i.saturating_sub(2)..=i + 2).find(|&k| k >= first && !le(w(k), bound)).unwrap_or(i);
                Membership::no(i)
            }
        }
        Tail::Exp { gamma, .. } => {
            // c i^s exp(-2 gamma i) peaks at i = s / (2 gamma)
            let peak = (s / (2.0 * gamma)).floor() as usize;
            let cands = [first, peak, peak + 1];
            match cands.iter().copied().filter(|&k| k >= first).find(|&k| !le(w(k), bound)) {
                Some(k) => Membership::no(k),
                None => Membership::yes(),
            }
        }
    }
}

/// Checks `i^{1+2 beta} f_i^2 >= bound` for all `i`.
fn weighted_inf(f: &SequenceSignal, beta: f64, bound: f64) -> Membership {
    let s = 1.0 + 2.0 * beta;
    let w = |i: usize| (i as f64).powf(s) * f.energy_at(i);
    if let Some(i) = (1..=f.len()).find(|&i| !le(bound, w(i))) {
        return Membership::no(i);
    }
    let first = f.len() + 1;
    match f.tail() {
        Tail::Zero => Membership::no(first),
        Tail::Exp { gamma, .. } => {
            // decays to zero eventually: first index below the bound
            let mut i = first;
            if le(bound, w(i)) {
                i = i.max((s / (2.0 * gamma)).ceil() as usize);
                while le(bound, w(i)) {
                    i += 1;
                }
            }
            Membership::no(i)
        }
        Tail::Power { c, beta: bt } => {
            let e = 2.0 * (beta - bt);
            if e >= 0.0 {
                if le(bound, w(first)) { Membership::yes() } else { Membership::no(first) }
            } else {
                let i = ((c / bound).powf(1.0 / -e).floor() as usize + 1).max(first);
                let i = (i.saturating_sub(2)..=i + 2).find(|&k| k >= first && !le(bound, w(k))).unwrap_or(i);
                Membership::no(i)
            }
        }
    }
}

/// Checks `sum_i f_i^2 exp(2 gamma i) <= bound`.
fn analytic_sum(f: &SequenceSignal, gamma: f64, bound: f64) -> Membership {
    let mut acc = CompensatedSum::new();
    for i in 1..=f.len() {
        acc.add(f.energy_at(i) * (2.0 * gamma * i as f64).exp());
        if !le(acc.value(), bound) {
            return Membership::no(i);
        }
    }
    let first = f.len() + 1;
    let tail_total = match f.tail() {
        Tail::Zero => 0.0,
        Tail::Power { .. } => f64::INFINITY,
        Tail::Exp { c, gamma: gt } => {
            let d = 2.0 * (gt - gamma);
            if d <= 0.0 {
                f64::INFINITY
            } else {
                c * (-d * first as f64).exp() / -(-d).exp_m1()
            }
        }
    };
    if le(acc.value() + tail_total, bound) {
        return Membership::yes();
    }
    // locate the first index where the partial sum crosses the bound
    let mut i = first;
    loop {
        acc.add(f.energy_at(i) * (2.0 * gamma * i as f64).exp());
        if !le(acc.value(), bound) || i > first + 10_000_000 {
            return Membership::no(i);
        }
        i += 1;
    }
}

fn polished_tail(f: &SequenceSignal, l0: f64, n0: usize, rho: f64) -> Result<Membership> {
    let stored = f.len();
    // suffix[k] = sum_{i > k} f_i^2 for k <= stored (tail included)
    let mut suffix = vec![0.0; stored + 1];
    suffix[stored] = f.tail().energy_beyond(stored);
    let mut acc = CompensatedSum::new();
    acc.add(suffix[stored]);
    for k in (0..stored).rev() {
        acc.add(f.coeffs()[k] * f.coeffs()[k]);
        suffix[k] = acc.value();
    }
    let beyond = |k: usize| -> f64 {
        if k <= stored { suffix[k] } else { f.tail().energy_beyond(k) }
    };
    let block_end = |big_n: usize| -> usize { ((rho * big_n as f64) * (1.0 + 1e-15)).floor() as usize };

    let scan_end = match f.tail() {
        Tail::Zero => stored + 1,
        _ => POLISHED_SCAN_LIMIT.max(4 * stored).max(n0),
    };
    for big_n in n0..=scan_end.max(n0) {
        let total = beyond(big_n - 1);
        let block = total - beyond(block_end(big_n).max(big_n - 1));
        if !le(total, l0 * block) {
            return Ok(Membership::no(big_n));
        }
    }
    // Past the scan the ratio total/block is governed by the tail descriptor.
    match f.tail() {
        Tail::Zero => Ok(Membership::yes()),
        // block length floor(rho N) - N + 1 is nondecreasing, so the ratio
        // can only fall after the scan
        Tail::Exp { .. } => Ok(Membership::yes()),
        Tail::Power { beta, .. } => {
            // ratio -> 1 / (1 - rho^{-2 beta})
            let limit = 1.0 / (1.0 - rho.powf(-2.0 * beta));
            if rho == 1.0 || l0 < limit * (1.0 - 1e-9) {
                Ok(Membership::no(scan_end + 1))
            } else if l0 > limit * (1.0 + 1e-9) {
                Ok(Membership::yes())
            } else {
                Err(Error::UnsupportedCheck(format!(
                    "polished-tail constant {l0} equals the asymptotic ratio {limit}"
                )))
            }
        }
    }
}

/// Evaluation points together with the number of basis functions used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisGrid {
    points: Vec<f64>,
    basis_size: usize,
}

impl BasisGrid {
    pub fn new(points: Vec<f64>, basis_size: usize) -> Result<Self> {
        if basis_size < 1 {
            return Err(invalid("basis size must be at least 1"));
        }
        if points.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("grid points must be sorted"));
        }
        Ok(Self { points, basis_size })
    }

    /// `count` equally spaced points on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize, basis_size: usize) -> Result<Self> {
        if count < 2 || !(lo < hi) {
            return Err(invalid("uniform grid needs count >= 2 and lo < hi"));
        }
        let pts = (0..count)
            .map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64)
            .collect();
        Self::new(pts, basis_size)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn basis_size(&self) -> usize {
        self.basis_size
    }
}

/// `psi_i(x)` for the cosine basis, `i` 1-based.
#[inline]
pub fn basis_fn(i: usize, x: f64) -> f64 {
    std::f64::consts::SQRT_2 * (std::f64::consts::PI * (i as f64 - 0.5) * x).cos()
}

/// Evaluates `sum_{i <= K} c_i psi_i(x)` at one point; `c` holds `c_1..c_K`.
pub fn synthesize_at(c: &[f64], x: f64) -> f64 {
    // cos(pi (i - 1/2) x) by the Chebyshev-style recurrence
    // cos((k+1) t + t0) = 2 cos t cos(k t + t0) - cos((k-1) t + t0)
    let t = std::f64::consts::PI * x;
    let two_cos = 2.0 * t.cos();
    let mut prev = (-0.5 * t).cos(); // i = 0
    let mut cur = (0.5 * t).cos(); // i = 1
    let mut acc = CompensatedSum::new();
    for (k, &ci) in c.iter().enumerate() {
        if k > 0 {
            let next = two_cos * cur - prev;
            prev = cur;
            cur = next;
        }
        acc.add(ci * cur);
    }
    std::f64::consts::SQRT_2 * acc.value()
}

/// `f(x) = sum_{i <= K} f_i psi_i(x)` at each grid point.
pub fn synthesize(f: &SequenceSignal, grid: &BasisGrid) -> Result<Vec<f64>> {
    let k = grid.basis_size();
    if k > f.len() {
        return Err(invalid(format!(
            "basis size {k} exceeds the {} stored coefficients",
            f.len()
        )));
    }
    let c = &f.coeffs()[..k];
    Ok(grid.points().iter().map(|&x| synthesize_at(c, x)).collect())
}
