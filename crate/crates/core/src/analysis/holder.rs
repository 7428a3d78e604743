//! Discrete Hölder seminorms on a uniform grid.

use crate::error::{Error, Result};

/// Above this many steps only dyadic lags are scanned.
pub const ALL_PAIRS_MAX: usize = 1 << 12;

/// `max |x_v - x_u| / (v - u)^γ` over ordered node pairs of a path with
/// `dim` components stored row-major on `n + 1` nodes spanning `[0, T]`.
///
/// Grids longer than [`ALL_PAIRS_MAX`] steps are scanned over lags `2^l`
/// from every starting node.
pub fn holder_seminorm(values: &[f64], dim: usize, horizon: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("Hölder exponent must be positive, got {gamma}")));
    }
    if dim == 0 || values.len() % dim != 0 || values.len() < 2 * dim {
        return Err(Error::Empty("Hölder seminorm needs at least two nodes"));
    }
    let n = values.len() / dim - 1;
    let h = horizon / n as f64;
    let dist = |u: usize, v: usize| -> f64 {
        (0..dim)
            .map(|c| {
                let d = values[v * dim + c] - values[u * dim + c];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut best: f64 = 0.0;
    let mut scan = |lag: usize| {
        let denom = (lag as f64 * h).powf(gamma);
        for u in 0..=n - lag {
            best = best.max(dist(u, u + lag) / denom);
        }
    };
    if n <= ALL_PAIRS_MAX {
        (1..=n).for_each(&mut scan);
    } else {
        let mut lag = 1;
        while lag <= n {
            scan(lag);
            lag *= 2;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::generate_fbm;
    use crate::numeric::median;

    #[test]
    fn linear_and_constant_paths() {
        let xs: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        assert!((holder_seminorm(&xs, 1, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(holder_seminorm(&[3.0; 10], 1, 1.0, 0.5).unwrap(), 0.0);
        assert!(holder_seminorm(&[1.0], 1, 1.0, 0.5).is_err());
        assert!(holder_seminorm(&xs, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn seminorm_above_hurst_grows_with_n() {
        let medians: Vec<f64> = [1 << 8, 1 << 10, 1 << 12]
            .iter()
            .map(|&n| {
                let norms: Vec<f64> = (0..100u64)
                    .map(|r| {
                        let p = generate_fbm(0.4, n, 1.0, 1, 1000 + r).unwrap();
                        holder_seminorm(&p.values[0], 1, 1.0, 0.45).unwrap()
                    })
                    .collect();
                median(&norms)
            })
            .collect();
        assert!(medians[0] < medians[1] && medians[1] < medians[2], "{medians:?}");
    }
}
