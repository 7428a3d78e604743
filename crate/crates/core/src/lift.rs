//! Second-level lift of a sampled path and the centered Lévy-area process.
//!
//! The second level over a coarse step is the iterated integral of the
//! piecewise-linear interpolation of the fine path. On one linear segment
//! with increment `dx` the iterated integral is `dx ⊗ dx / 2`; across
//! segments Chen's relation adds `(x_u - x_s) ⊗ dx`, which is what the
//! accumulation below does.

use crate::error::{Error, Result};
use crate::fbm::{pow2h, FbmPath};

/// Coarse-grid increments together with their second-level iterated integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughLift {
    pub hurst: f64,
    pub horizon: f64,
    pub coarse_n: usize,
    /// Fine steps per coarse step.
    pub refinement: usize,
    pub dim: usize,
    /// Row-major `[coarse_n × m]`.
    pub delta_b: Vec<f64>,
    /// Row-major `[coarse_n × m × m]`, entry `(k, i, j)` at `(k * m + i) * m + j`.
    pub bb: Vec<f64>,
}

impl RoughLift {
    pub fn step(&self) -> f64 {
        self.horizon / self.coarse_n as f64
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.delta_b[k * self.dim..(k + 1) * self.dim]
    }

    pub fn area(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.bb[k * mm..(k + 1) * mm]
    }

    /// Expected diagonal area `h^{2H} / 2` on one coarse step.
    pub fn diagonal_mean(&self) -> f64 {
        0.5 * pow2h(self.step(), self.hurst)
    }
}

/// Lift over fine nodes `[from, to]`: returns `(δB, 𝔹)` with `𝔹` row-major `m × m`.
pub fn lift_window(path: &FbmPath, from: usize, to: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(from <= to && to <= path.n) {
        return Err(Error::Grid(format!(
            "window [{from}, {to}] outside a path with {} steps",
            path.n
        )));
    }
    let m = path.components();
    let mut inc = vec![0.0; m];
    let mut area = vec![0.0; m * m];
    let mut dx = vec![0.0; m];
    accumulate(path, from, to, &mut inc, &mut area, &mut dx);
    Ok((inc, area))
}

fn accumulate(
    path: &FbmPath,
    from: usize,
    to: usize,
    inc: &mut [f64],
    area: &mut [f64],
    dx: &mut [f64],
) {
    let m = inc.len();
    inc.iter_mut().for_each(|x| *x = 0.0);
    area.iter_mut().for_each(|x| *x = 0.0);
    for a in from..to {
        for (j, comp) in path.values.iter().enumerate() {
            dx[j] = comp[a + 1] - comp[a];
        }
        for i in 0..m {
            let left = inc[i] + 0.5 * dx[i];
            let row = &mut area[i * m..(i + 1) * m];
            for j in 0..m {
                row[j] += left * dx[j];
            }
        }
        for j in 0..m {
            inc[j] += dx[j];
        }
    }
    // δB is recomputed from the endpoints so that it is exact on the grid.
    for (j, comp) in path.values.iter().enumerate() {
        inc[j] = comp[to] - comp[from];
    }
}

/// Geometric lift of the piecewise-linear fine path on `coarse_n` steps.
pub fn lift_geometric(path: &FbmPath, coarse_n: usize) -> Result<RoughLift> {
    if coarse_n == 0 || path.n % coarse_n != 0 {
        return Err(Error::Divisibility {
            what: "lift",
            n: path.n,
            factor: coarse_n,
        });
    }
    let m = path.components();
    let refinement = path.n / coarse_n;
    let mut delta_b = vec![0.0; coarse_n * m];
    let mut bb = vec![0.0; coarse_n * m * m];
    let mut dx = vec![0.0; m];
    for k in 0..coarse_n {
        let (inc, area) = (
            &mut delta_b[k * m..(k + 1) * m],
            &mut bb[k * m * m..(k + 1) * m * m],
        );
        accumulate(path, k * refinement, (k + 1) * refinement, inc, area, &mut dx);
    }
    Ok(RoughLift {
        hurst: path.hurst,
        horizon: path.horizon,
        coarse_n,
        refinement,
        dim: m,
        delta_b,
        bb,
    })
}

/// Cumulative sums of second-level increments, diagonal centered by `h^{2H}/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyAreaF {
    pub hurst: f64,
    pub horizon: f64,
    pub coarse_n: usize,
    pub dim: usize,
    /// Row-major `[(coarse_n + 1) × m × m]`.
    pub values: Vec<f64>,
}

impl LevyAreaF {
    pub fn at(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.values[k * mm..(k + 1) * mm]
    }

    pub fn entry(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[(k * self.dim + i) * self.dim + j]
    }

    /// `δF` over coarse step `k`, row-major `m × m`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.at(k + 1)
            .iter()
            .zip(self.at(k))
            .map(|(b, a)| b - a)
            .collect()
    }
}

pub fn levy_area_process(lift: &RoughLift) -> LevyAreaF {
    let m = lift.dim;
    let mm = m * m;
    let centre = lift.diagonal_mean();
    let mut values = vec![0.0; (lift.coarse_n + 1) * mm];
    for k in 0..lift.coarse_n {
        let area = lift.area(k);
        let (prev, next) = values[k * mm..(k + 2) * mm].split_at_mut(mm);
        for i in 0..m {
            for j in 0..m {
                let c = if i == j { centre } else { 0.0 };
                next[i * m + j] = prev[i * m + j] + area[i * m + j] - c;
            }
        }
    }
    LevyAreaF {
        hurst: lift.hurst,
        horizon: lift.horizon,
        coarse_n: lift.coarse_n,
        dim: m,
        values,
    }
}
