//! Discrete sewing inequality `‖R‖_μ ≤ K_μ ‖δR‖_μ` for two-parameter
//! increments vanishing on consecutive nodes.

use crate::error::{Error, Result};

/// Partial sums up to this index before the Euler–Maclaurin tail.
const ZETA_TERMS: usize = 64;

/// `K_μ = 2^μ ζ(μ)`.
pub fn sewing_constant(mu: f64) -> Result<f64> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("the series defining K_mu diverges for mu = {mu}")));
    }
    Ok(2f64.powf(mu) * zeta(mu))
}

/// `ζ(s)` for `s > 1`: partial sum plus an Euler–Maclaurin tail, whose
/// truncation error at `N = 64` stays below `1e-13` for every `s > 1`.
fn zeta(s: f64) -> f64 {
    let n = ZETA_TERMS as f64;
    let head: f64 = (1..ZETA_TERMS).rev().map(|l| (l as f64).powf(-s)).sum();
    let tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * n.powf(-s - 5.0) / 30240.0;
    head + tail
}

/// Values `R_{t_i t_j}` for `i < j` on the nodes `times`, with
/// `R_{t_k t_{k+1}} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SewingIncrement {
    pub grid_n: usize,
    pub times: Vec<f64>,
    /// Row-major `(n + 1) × (n + 1)`; only `i < j` is read.
    pub r: Vec<f64>,
}

impl SewingIncrement {
    pub fn new(times: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Empty("sewing increment needs two nodes"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("nodes must be strictly increasing".into()));
        }
        let n = times.len() - 1;
        if r.len() != (n + 1) * (n + 1) {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes",
                r.len(),
                n + 1
            )));
        }
        if let Some(k) = (0..n).find(|&k| r[k * (n + 1) + k + 1] != 0.0) {
            return Err(Error::Domain(format!(
                "R does not vanish on consecutive nodes {k}, {}",
                k + 1
            )));
        }
        Ok(Self { grid_n: n, times, r })
    }

    /// Build from `f(i, j)`, then subtract the sum over consecutive pairs
    /// so that `R_{t_k t_{k+1}} = 0`. The correction is additive and leaves
    /// `δR` unchanged.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = times.len().saturating_sub(1);
        let mut r = vec![0.0; (n + 1) * (n + 1)];
        let steps: Vec<f64> = (0..n).map(|k| f(k, k + 1)).collect();
        for i in 0..=n {
            let mut along = 0.0;
            for j in i + 1..=n {
                along += steps[j - 1];
                r[i * (n + 1) + j] = if j == i + 1 { 0.0 } else { f(i, j) - along };
            }
        }
        Self::new(times, r)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * (self.grid_n + 1) + j]
    }

    /// `(‖R‖_μ, ‖δR‖_μ)`.
    pub fn norms(&self, mu: f64) -> (f64, f64) {
        let n = self.grid_n;
        let t = &self.times;
        let mut r_norm: f64 = 0.0;
        let mut d_norm: f64 = 0.0;
        for i in 0..=n {
            for j in i + 1..=n {
                let span = (t[j] - t[i]).powf(mu);
                let rij = self.get(i, j);
                r_norm = r_norm.max(rij.abs() / span);
                for u in i + 1..j {
                    let d = rij - self.get(i, u) - self.get(u, j);
                    d_norm = d_norm.max(d.abs() / span);
                }
            }
        }
        (r_norm, d_norm)
    }
}

/// `‖R‖_μ / (K_μ ‖δR‖_μ)`; the inequality asserts a ratio at most 1.
pub fn sewing_check(r: &SewingIncrement, mu: f64) -> Result<f64> {
    let k = sewing_constant(mu)?;
    let (r_norm, d_norm) = r.norms(mu);
    if r_norm == 0.0 {
        return Ok(0.0);
    }
    if d_norm == 0.0 {
        return Err(Error::SewingViolation(f64::INFINITY));
    }
    Ok(r_norm / (k * d_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_values() {
        assert!((sewing_constant(2.0).unwrap() - 6.579_736_267_392_906).abs() < 1e-10);
        assert!((sewing_constant(1.5).unwrap() - 7.388_913_296_240_32).abs() < 1e-10);
        assert!((sewing_constant(40.0).unwrap() / 2f64.powi(40) - 1.0).abs() < 1e-11);
        assert!(sewing_constant(1.0).is_err());
        assert!(sewing_constant(0.5).is_err());
    }

    #[test]
    fn zero_increment_has_zero_ratio() {
        let r = SewingIncrement::from_fn((0..6).map(|k| k as f64).collect(), |_, _| 0.0).unwrap();
        assert_eq!(sewing_check(&r, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn consecutive_values_must_vanish() {
        let mut r = vec![0.0; 9];
        r[1] = 1.0;
        assert!(SewingIncrement::new(vec![0.0, 1.0, 2.0], r).is_err());
    }

    #[test]
    fn product_increments_satisfy_the_bound() {
        // R_{s t} = Σ_{s ≤ t_k < t} (f_{t_k} - f_s)(g_{t_{k+1}} - g_{t_k}).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 24;
        let f: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let r = SewingIncrement::from_fn(times, |i, j| {
            (i..j).map(|k| (f[k] - f[i]) * (g[k + 1] - g[k])).sum()
        })
        .unwrap();
        for mu in [1.2, 1.5, 2.0, 3.0] {
            assert!(sewing_check(&r, mu).unwrap() <= 1.0);
        }
    }
}
