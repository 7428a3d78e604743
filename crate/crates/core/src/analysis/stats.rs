//! Error norms, rate regression and the two-sample Kolmogorov–Smirnov statistic.

use crate::error::{Error, Result};
use crate::schemes::{sup_distance, Trajectory};

/// Max Euclidean distance between two trajectories on a common grid.
pub fn sup_error(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    sup_distance(a, b)
}

/// Least-squares fit of `log(error)` against `log(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub ns: Vec<usize>,
    pub mean_sup_errors: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub mc_reps: usize,
}

impl RateReport {
    /// Empirical convergence rate, `-slope`.
    pub fn rate(&self) -> f64 {
        -self.fitted_slope
    }
}

pub fn rate_fit(ns: &[usize], errors: &[f64]) -> Result<RateReport> {
    rate_fit_with_reps(ns, errors, 0)
}

pub fn rate_fit_with_reps(ns: &[usize], errors: &[f64], mc_reps: usize) -> Result<RateReport> {
    if ns.len() != errors.len() {
        return Err(Error::Dimension(format!(
            "{} grid sizes and {} errors",
            ns.len(),
            errors.len()
        )));
    }
    if ns.len() < 4 {
        return Err(Error::Domain(format!(
            "rate fit needs at least 4 grid sizes, got {}",
            ns.len()
        )));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(Error::Domain("grid sizes must be positive and increasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("errors must be positive and finite, got {e}")));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateReport {
        ns: ns.to_vec(),
        mean_sup_errors: errors.to_vec(),
        fitted_slope: slope,
        slope_stderr: stderr,
        intercept,
        mc_reps,
    })
}

/// `sup_x |F_xs(x) - F_ys(x)|` over the empirical distribution functions.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("Kolmogorov-Smirnov needs two nonempty samples"));
    }
    if xs.iter().chain(ys).any(|x| x.is_nan()) {
        return Err(Error::Domain("Kolmogorov-Smirnov samples contain NaN".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value `c(α) sqrt((n + m) / (n m))` with
/// `c(α) = sqrt(-ln(α / 2) / 2)`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
