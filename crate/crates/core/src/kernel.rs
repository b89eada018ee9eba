//! Squared-exponential kernel `k(s, t) = exp(-a (s - t)^2)` and the dense
//! factorisations the GP modules share.

use faer::{Mat, Side};

use crate::error::{Error, Result};

pub(crate) fn se(a: f64, s: f64, t: f64) -> f64 {
    (-a * (s - t) * (s - t)).exp()
}

pub(crate) fn gram(x: &[f64], a: f64) -> Mat<f64> {
    let n = x.len();
    Mat::from_fn(n, n, |i, j| se(a, x[i], x[j]))
}

pub(crate) fn cross(x: &[f64], a: f64, at: f64) -> Vec<f64> {
    x.iter().map(|&xi| se(a, xi, at)).collect()
}

/// Everything needed to evaluate `log N(y; 0, K_a + s2 I)` cheaply for many
/// `s2` at a fixed scale.
#[derive(Debug, Clone)]
pub(crate) enum Evidence {
    Spectral(Spectrum),
    Banded(Banded),
}

impl Evidence {
    /// Banded storage when the kernel is numerically banded on sorted inputs,
    /// otherwise a low-rank or full eigen-decomposition.
    pub fn compute(x: &[f64], y: &[f64], a: f64) -> Result<Evidence> {
        let n = x.len();
        if let Some(b) = Banded::new(x, y, a, n / 8) {
            return Ok(Evidence::Banded(b));
        }
        Spectrum::compute(x, y, a).map(Evidence::Spectral)
    }

    pub fn log_marginal(&self, s2: f64) -> f64 {
        match self {
            Evidence::Spectral(s) => s.log_marginal(s2),
            Evidence::Banded(b) => b.log_marginal(s2),
        }
    }
}

/// Eigen-decomposition of the Gram matrix seen through the responses:
/// eigenvalues `lambda_j` with squared projections `z_j = (u_j' y)^2`, plus the
/// energy of `y` in the numerical null space.
#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    pub values: Vec<f64>,
    pub proj_sq: Vec<f64>,
    pub null_energy: f64,
    pub n: usize,
}

/// Residual diagonal below which the pivoted Cholesky stops.
const LOW_RANK_TOL: f64 = 1e-12;

impl Spectrum {
    pub fn compute(x: &[f64], y: &[f64], a: f64) -> Result<Spectrum> {
        let n = x.len();
        match low_rank(x, y, a, n / 4) {
            Some(s) => Ok(s),
            None => dense(x, y, a),
        }
    }

    /// Exact Gaussian log marginal likelihood at noise variance `s2`.
    pub fn log_marginal(&self, s2: f64) -> f64 {
        let mut quad = self.null_energy / s2;
        let mut logdet = (self.n - self.values.len()) as f64 * s2.ln();
        for (l, z) in self.values.iter().zip(&self.proj_sq) {
            quad += z / (l + s2);
            logdet += (l + s2).ln();
        }
        -0.5 * (quad + logdet + self.n as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

fn dense(x: &[f64], y: &[f64], a: f64) -> Result<Spectrum> {
    let k = gram(x, a);
    let eig = k
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed at a = {a}: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = x.len();
    let mut values = Vec::with_capacity(n);
    let mut proj_sq = Vec::with_capacity(n);
    for j in 0..n {
        let c: f64 = (0..n).map(|i| u[(i, j)] * y[i]).sum();
        values.push(s[j].max(0.0));
        proj_sq.push(c * c);
    }
    Ok(Spectrum { values, proj_sq, null_energy: 0.0, n })
}

/// Pivoted Cholesky `K ~ L L'` with at most `max_rank` columns, turned into
/// an eigen-decomposition through the small Gram matrix `L'L`. `None` when
/// the rank budget runs out.
fn low_rank(x: &[f64], y: &[f64], a: f64, max_rank: usize) -> Option<Spectrum> {
    let n = x.len();
    let mut diag = vec![1.0; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let (p, &dp) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| f64::total_cmp(a.1, b.1))
            .expect("nonempty");
        if dp <= LOW_RANK_TOL {
            break;
        }
        if cols.len() >= max_rank {
            return None;
        }
        let piv = dp.sqrt();
        let mut col: Vec<f64> = (0..n).map(|i| se(a, x[i], x[p])).collect();
        for c in &cols {
            let cp = c[p];
            for (v, ci) in col.iter_mut().zip(c) {
                *v -= ci * cp;
            }
        }
        for (i, v) in col.iter_mut().enumerate() {
            *v /= piv;
            diag[i] -= *v * *v;
        }
        col[p] = piv;
        diag[p] = 0.0;
        cols.push(col);
    }
    let r = cols.len();
    if r == 0 {
        return Some(Spectrum { values: vec![], proj_sq: vec![], null_energy: y.iter().map(|v| v * v).sum(), n });
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let small = Mat::from_fn(r, r, |i, j| dot(&cols[i], &cols[j]));
    let w: Vec<f64> = cols.iter().map(|c| dot(c, y)).collect();
    let eig = small.self_adjoint_eigen(Side::Lower).ok()?;
    let s = eig.S().column_vector();
    let v = eig.U();
    let top = (0..r).map(|j| s[j]).fold(0.0, f64::max);
    let mut values = Vec::new();
    let mut proj_sq = Vec::new();
    // t = V diag(c / sqrt(lambda)) so that L t is the projection of y
    let mut t = vec![0.0; r];
    for j in 0..r {
        let lam = s[j];
        if lam <= 1e-14 * top {
            continue;
        }
        let c = (0..r).map(|i| v[(i, j)] * w[i]).sum::<f64>() / lam.sqrt();
        values.push(lam);
        proj_sq.push(c * c);
        for (i, ti) in t.iter_mut().enumerate() {
            *ti += v[(i, j)] * c / lam.sqrt();
        }
    }
    let mut resid = y.to_vec();
    for (c, tj) in cols.iter().zip(&t) {
        for (ri, ci) in resid.iter_mut().zip(c) {
            *ri -= ci * tj;
        }
    }
    Some(Spectrum { values, proj_sq, null_energy: resid.iter().map(|v| v * v).sum(), n })
}

/// Kernel entries below `e^{-BAND_EXPONENT}` are dropped from the band.
const BAND_EXPONENT: f64 = 46.0;

/// Gram matrix on sorted inputs, keeping the `w` sub-diagonals where
/// `exp(-a d^2)` exceeds `e^{-BAND_EXPONENT}`. Row `i` stores columns
/// `i - w ..= i`.
#[derive(Debug, Clone)]
pub(crate) struct Banded {
    n: usize,
    w: usize,
    band: Vec<f64>,
    y: Vec<f64>,
}

impl Banded {
    /// `None` when the half-bandwidth would exceed `max_w`.
    pub fn new(x: &[f64], y: &[f64], a: f64, max_w: usize) -> Option<Banded> {
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| f64::total_cmp(&x[i], &x[j]));
        let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let reach = (BAND_EXPONENT / a).sqrt();
        let mut w = 0;
        let mut hi = 0;
        for i in 0..n {
            while hi + 1 < n && xs[hi + 1] - xs[i] <= reach {
                hi += 1;
            }
            w = w.max(hi.max(i) - i);
            if w > max_w {
                return None;
            }
        }
        let stride = w + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for j in i.saturating_sub(w)..=i {
                band[i * stride + j + w - i] = se(a, xs[i], xs[j]);
            }
        }
        Some(Banded { n, w, band, y: order.iter().map(|&i| y[i]).collect() })
    }

    /// Band Cholesky of `K + s2 I`; `-inf` if it breaks down, which the
    /// dropped entries (each below `e^{-46}`) cannot cause for `s2 >= 1e-6`.
    pub fn log_marginal(&self, s2: f64) -> f64 {
        let (n, w) = (self.n, self.w);
        let stride = w + 1;
        let mut l = self.band.clone();
        for i in 0..n {
            l[i * stride + w] += s2;
        }
        let mut logdet = 0.0;
        for i in 0..n {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                // columns k in lo..j shared by rows i and j
                let ri = i * stride + w - i;
                let rj = j * stride + w - j;
                let dot: f64 = l[ri + lo..ri + j].iter().zip(&l[rj + lo..rj + j]).map(|(p, q)| p * q).sum();
                let v = l[ri + j] - dot;
                if i == j {
                    if !(v > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    let d = v.sqrt();
                    l[ri + j] = d;
                    logdet += 2.0 * d.ln();
                } else {
                    l[ri + j] = v / l[rj + j];
                }
            }
        }
        let mut z = self.y.clone();
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let ri = i * stride + w - i;
            let dot: f64 = l[ri + lo..ri + i].iter().zip(&z[lo..i]).map(|(p, q)| p * q).sum();
            z[i] = (z[i] - dot) / l[ri + i];
        }
        let quad: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * (quad + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Lower Cholesky factor of `m`, retrying with diagonal jitter
/// `1e-10 * mean diagonal`, escalated tenfold up to `1e-6`.
pub(crate) fn jittered_cholesky(m: &Mat<f64>) -> Result<(Mat<f64>, f64)> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let mut jitter = 0.0;
    loop {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter * scale;
        }
        if let Ok(llt) = shifted.llt(Side::Lower) {
            return Ok((llt.L().to_owned(), jitter * scale));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-6 * 1.0000001 {
            return Err(Error::NumericalFailure(format!(
                "Cholesky failed with jitter up to 1e-6 (n = {n})"
            )));
        }
    }
}

/// Solves `L x = b` in place.
pub(crate) fn forward_solve(l: &Mat<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `L' x = b` in place.
pub(crate) fn backward_solve(l: &Mat<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[(j, i)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}
