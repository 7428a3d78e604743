//! Limit-covariance constants `Q(k)`, `P(k)` and their sums.
//!
//! `Q(k)` is the covariance of the off-diagonal second-level increments
//! `𝔹^{12}` over the unit windows `[0, 1]` and `[k, k + 1]`; `P(k)` pairs
//! `𝔹^{12}` on the first window with `𝔹^{21}` on the second. Both are 2-D
//! Young integrals of the fBm covariance against itself. We evaluate them
//! as Riemann–Stieltjes sums on an `N × N` cell grid: the integrand is
//! averaged over the four cell corners and the integrator is the
//! rectangular covariance increment of the two cells, so the diagonal
//! singularity of the `μ` density is never touched.
//!
//! With that choice the sum at resolution `N` is exactly the covariance of
//! the second-level increments of the piecewise-linear interpolation at
//! `N` points per unit. Its error decays like `N^{1-4H}`, which one
//! Richardson step removes. The integrand splits into terms depending on a
//! single grid index or on the index difference, and the integrator only
//! on the difference, so each sum costs `O(N)` with prefix sums.

use rayon::prelude::*;

use crate::error::{check_hurst, Error, Result};
use crate::fbm::{fgn_autocovariance, pow2h};
use crate::numeric::CompensatedSum;

pub const DEFAULT_QUAD_N: usize = 1 << 15;
pub const DEFAULT_K_MAX: usize = 64;
/// Relative agreement required between two successive Richardson estimates.
pub const RICHARDSON_TOL: f64 = 1e-3;

/// Density of the off-diagonal covariance measure of fBm increments.
pub fn mu_density(r: f64, rp: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst, 0.0, 0.5, "(0, 1/2)")?;
    if r == rp {
        return Err(Error::Singular(r));
    }
    Ok(-hurst * (1.0 - 2.0 * hurst) * (r - rp).abs().powf(2.0 * hurst - 2.0))
}

/// Raw corner-evaluated sums `(Q_N(k), P_N(k))` at `cells` subdivisions per unit.
pub fn qp_riemann_sum(k: i64, hurst: f64, cells: usize) -> (f64, f64) {
    let n = cells as i64;
    let nf = cells as f64;
    let kf = k as f64;
    let p = |x: f64| pow2h(x, hurst);

    // Integrator: dR over cell a of the first window and cell b of the
    // second depends on d = b - a only.
    let scale = nf.powf(-2.0 * hurst);
    let offset = n - 1;
    let g: Vec<f64> = (-offset..=offset)
        .map(|d| scale * fgn_autocovariance(k * n + d, hurst))
        .collect();
    let gd = |d: i64| g[(d + offset) as usize];

    let mut prefix = Vec::with_capacity(g.len() + 1);
    let mut run = CompensatedSum::new();
    prefix.push(0.0);
    for &x in &g {
        run.add(x);
        prefix.push(run.value());
    }
    // Σ_{d=lo}^{hi} g(d)
    let range = |lo: i64, hi: i64| prefix[(hi + offset + 1) as usize] - prefix[(lo + offset) as usize];

    let grid = |a: i64| a as f64 / nf;
    let avg = |f: &dyn Fn(f64) -> f64, a: i64| 0.5 * (f(grid(a)) + f(grid(a + 1)));
    let fa = |r: f64| p(kf + r);
    let fc = |r: f64| p(kf - r);
    let fe = |r: f64| p(kf + 1.0 - r);
    let fd = |d: i64| {
        let at = |x: i64| p(kf + x as f64 / nf);
        0.25 * (2.0 * at(d) + at(d + 1) + at(d - 1))
    };

    let mut a_term = CompensatedSum::new();
    let mut c_term = CompensatedSum::new();
    let mut e_term = CompensatedSum::new();
    for idx in 0..n {
        // Row sums: over a for fixed b, and over b for fixed a.
        let over_a = range(idx - n + 1, idx);
        let over_b = range(-idx, n - 1 - idx);
        a_term.add(avg(&fa, idx) * over_a);
        c_term.add(avg(&fc, idx) * over_b);
        e_term.add(avg(&fe, idx) * over_b);
    }
    let mut d_term = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    for d in -offset..=offset {
        let w = (n - d.abs()) as f64 * gd(d);
        total.add(w);
        d_term.add(w * fd(d));
    }
    let (a, c, e, d, t) = (
        a_term.value(),
        c_term.value(),
        e_term.value(),
        d_term.value(),
        total.value(),
    );
    let q = 0.5 * (a + c - d - p(kf) * t);
    let pk = 0.5 * (p(kf + 1.0) * t + d - e - a);
    (q, pk)
}

fn richardson(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (ratio * fine - coarse) / (ratio - 1.0)
}

/// Extrapolated `(Q(k), P(k))`.
///
/// Sums at `quad_n`, `2 quad_n` and `4 quad_n` give two Richardson
/// estimates; they must agree to `RICHARDSON_TOL` relative, and the finer
/// one is returned.
pub fn qp_term(k: i64, hurst: f64, quad_n: usize) -> Result<(f64, f64)> {
    check_hurst(hurst, 0.25, 0.5, "(1/4, 1/2)")?;
    if quad_n < 8 {
        return Err(Error::Domain(format!("quad_n must be at least 8, got {quad_n}")));
    }
    let ratio = 2f64.powf(4.0 * hurst - 1.0);
    let s1 = qp_riemann_sum(k, hurst, quad_n);
    let s2 = qp_riemann_sum(k, hurst, 2 * quad_n);
    let s4 = qp_riemann_sum(k, hurst, 4 * quad_n);
    let e1 = (richardson(s1.0, s2.0, ratio), richardson(s1.1, s2.1, ratio));
    let e2 = (richardson(s2.0, s4.0, ratio), richardson(s2.1, s4.1, ratio));
    let magnitude = e2.0.abs() + e2.1.abs();
    let tol = RICHARDSON_TOL * magnitude + 1e-14;
    if (e1.0 - e2.0).abs() > tol {
        return Err(Error::Quadrature { k, first: e1.0, second: e2.0 });
    }
    if (e1.1 - e2.1).abs() > tol {
        return Err(Error::Quadrature { k, first: e1.1, second: e2.1 });
    }
    Ok(e2)
}

/// Table of `Q(k)`, `P(k)` for `|k| <= k_max` and their sums.
#[derive(Debug, Clone, PartialEq)]
pub struct QpTable {
    pub hurst: f64,
    pub k_max: usize,
    pub quad_n: usize,
    /// Index `k + k_max` holds `Q(k)`.
    pub qk: Vec<f64>,
    pub pk: Vec<f64>,
    pub q_sum: f64,
    pub p_sum: f64,
    /// Estimated mass of the omitted `|k| > k_max` terms (max over Q and P).
    pub tail_estimate: f64,
}

impl QpTable {
    pub fn q(&self, k: i64) -> f64 {
        self.qk[(k + self.k_max as i64) as usize]
    }

    pub fn p(&self, k: i64) -> f64 {
        self.pk[(k + self.k_max as i64) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    /// Same table with the roles of `Q` and `P` exchanged.
    pub fn swapped(&self) -> QpTable {
        QpTable {
            qk: self.pk.clone(),
            pk: self.qk.clone(),
            q_sum: self.p_sum,
            p_sum: self.q_sum,
            ..self.clone()
        }
    }

    /// Table carrying only the summed constants (no per-lag terms).
    pub fn from_sums(hurst: f64, q_sum: f64, p_sum: f64) -> QpTable {
        QpTable {
            hurst,
            k_max: 0,
            quad_n: 0,
            qk: vec![q_sum],
            pk: vec![p_sum],
            q_sum,
            p_sum,
            tail_estimate: 0.0,
        }
    }
}

/// Power-law tail `Σ_{|k| > k_max} c k^{-α}` fitted on the last four positive lags.
fn tail_mass(terms: &[f64], k_max: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (k_max - 3..=k_max)
        .map(|k| (k as f64, terms[k].abs()))
        .filter(|&(_, v)| v > 0.0)
        .map(|(k, v)| (k.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let alpha = -sxy / sxx;
    if alpha <= 1.0 {
        return f64::INFINITY;
    }
    let c = (my + alpha * mx).exp();
    // Two-sided integral from k_max + 1/2 to infinity.
    2.0 * c * (k_max as f64 + 0.5).powf(1.0 - alpha) / (alpha - 1.0)
}

pub fn qp_sum(hurst: f64, k_max: usize, quad_n: usize) -> Result<QpTable> {
    check_hurst(hurst, 0.25, 0.5, "(1/4, 1/2)")?;
    if k_max < 4 {
        return Err(Error::Domain(format!("k_max must be at least 4, got {k_max}")));
    }
    let k = k_max as i64;
    let terms: Vec<(f64, f64)> = (-k..=k)
        .into_par_iter()
        .map(|lag| qp_term(lag, hurst, quad_n))
        .collect::<Result<_>>()?;
    let (qk, pk): (Vec<f64>, Vec<f64>) = terms.into_iter().unzip();
    let mut q_sum = CompensatedSum::new();
    let mut p_sum = CompensatedSum::new();
    for (&q, &p) in qk.iter().zip(&pk) {
        q_sum.add(q);
        p_sum.add(p);
    }
    let positive_q = &qk[k_max..];
    let positive_p = &pk[k_max..];
    let tail_estimate = tail_mass(positive_q, k_max).max(tail_mass(positive_p, k_max));
    Ok(QpTable {
        hurst,
        k_max,
        quad_n,
        qk,
        pk,
        q_sum: q_sum.value(),
        p_sum: p_sum.value(),
        tail_estimate,
    })
}

/// `E[W^{ij}_t W^{i'j'}_s]` for the limiting Brownian matrix (indices 1-based).
#[allow(clippy::too_many_arguments)]
pub fn w_covariance(
    t: f64,
    s: f64,
    i: usize,
    j: usize,
    i2: usize,
    j2: usize,
    dim: usize,
    table: &QpTable,
    horizon: f64,
) -> Result<f64> {
    for idx in [i, j, i2, j2] {
        if idx == 0 || idx > dim {
            return Err(Error::Domain(format!("index {idx} outside 1..={dim}")));
        }
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let structure = table.q_sum * delta(i, i2) * delta(j, j2) + table.p_sum * delta(i, j2) * delta(j, i2);
    Ok(horizon.powf(4.0 * table.hurst - 1.0) * structure * t.min(s))
}
