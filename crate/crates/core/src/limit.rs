//! The Brownian motion `W` with covariance
//! `E[W^{ij}_t W^{i'j'}_s] = T^{4H-1}(Q δ_{ii'}δ_{jj'} + P δ_{ij'}δ_{ji'}) (t ∧ s)`
//! and the limit process `U_t = Φ_t Σ Ψ_u ∂V_j V_{j'}(y_u) dW^{jj'}_u`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constants::QpTable;
use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldEval, Order};
use crate::jacobian::JacobianPair;
use crate::schemes::Trajectory;
use crate::seed::stream;

/// Relative size of a negative eigenvalue tolerated as roundoff.
pub const PSD_TOL: f64 = 1e-12;

/// Square root of the per-unit-time covariance of `vec(W)`, entry `(i, j)`
/// at index `i * m + j`.
#[derive(Debug, Clone)]
pub struct WFactor {
    pub dim_m: usize,
    /// Row-major `m² × m²`, `C = L Lᵀ`.
    pub factor: Vec<f64>,
}

/// Covariance rate of `vec(W)` per unit time.
pub fn w_rate_matrix(q: f64, p: f64, hurst: f64, horizon: f64, m: usize) -> DMatrix<f64> {
    let scale = horizon.powf(4.0 * hurst - 1.0);
    let mm = m * m;
    DMatrix::from_fn(mm, mm, |a, b| {
        let (i, j) = (a / m, a % m);
        let (i2, j2) = (b / m, b % m);
        let mut c = 0.0;
        if i == i2 && j == j2 {
            c += q;
        }
        if i == j2 && j == i2 {
            c += p;
        }
        scale * c
    })
}

impl WFactor {
    pub fn new(table: &QpTable, horizon: f64, m: usize) -> Result<Self> {
        Self::from_constants(table.q_sum, table.p_sum, table.hurst, horizon, m)
    }

    pub fn from_constants(q: f64, p: f64, hurst: f64, horizon: f64, m: usize) -> Result<Self> {
        Self::build(q, p, hurst, horizon, m, false)
    }

    /// Like [`WFactor::from_constants`], but negative eigenvalues are set to
    /// zero instead of rejected. Only meant for diagnostics on deliberately
    /// corrupted constants.
    pub fn projected(q: f64, p: f64, hurst: f64, horizon: f64, m: usize) -> Result<Self> {
        Self::build(q, p, hurst, horizon, m, true)
    }

    fn build(q: f64, p: f64, hurst: f64, horizon: f64, m: usize, project: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::Dimension("noise dimension must be positive".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if q < p.abs() {
            log::warn!("Q = {q} is not larger than |P| = {}; W covariance is degenerate or indefinite", p.abs());
        } else if p < 0.0 {
            log::debug!("P = {p} < 0: W^ij and W^ji are negatively correlated");
        }
        let c = w_rate_matrix(q, p, hurst, horizon, m);
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let top = eig.eigenvalues.amax();
        let low = eig.eigenvalues.min();
        if low < -PSD_TOL * top.max(f64::MIN_POSITIVE) {
            if !project {
                return Err(Error::NotPositiveSemidefinite(low));
            }
            log::warn!("projecting an indefinite W covariance (smallest eigenvalue {low})");
        }
        let mm = m * m;
        let mut factor = vec![0.0; mm * mm];
        for col in 0..mm {
            let s = eig.eigenvalues[col].max(0.0).sqrt();
            for row in 0..mm {
                factor[row * mm + col] = eig.eigenvectors[(row, col)] * s;
            }
        }
        Ok(Self { dim_m: m, factor })
    }

    /// One increment of `vec(W)` over a step of length `dt`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64, z: &mut [f64], out: &mut [f64]) {
        let mm = self.dim_m * self.dim_m;
        for x in z.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let s = dt.sqrt();
        for row in 0..mm {
            let mut acc = 0.0;
            for col in 0..mm {
                acc += self.factor[row * mm + col] * z[col];
            }
            out[row] = s * acc;
        }
    }
}

/// `grid_nu` independent increments of `W` over `[0, T]`, row-major
/// `[ν × m × m]`, drawn from the stream of `seed`.
pub fn sample_w(
    table: &QpTable,
    horizon: f64,
    grid_nu: usize,
    dim_m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let factor = WFactor::new(table, horizon, dim_m)?;
    Ok(sample_w_with(&factor, horizon, grid_nu, seed))
}

pub fn sample_w_with(factor: &WFactor, horizon: f64, grid_nu: usize, seed: u64) -> Vec<f64> {
    let mm = factor.dim_m * factor.dim_m;
    let mut rng = stream(seed, &[]);
    let dt = horizon / grid_nu as f64;
    let mut z = vec![0.0; mm];
    let mut out = vec![0.0; grid_nu * mm];
    for k in 0..grid_nu {
        factor.draw(&mut rng, dt, &mut z, &mut out[k * mm..(k + 1) * mm]);
    }
    out
}

/// A draw of `U` on the grid of the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    pub dim: usize,
    pub grid_n: usize,
    /// Row-major `[(ν + 1) × d]`, first row zero.
    pub u_values: Vec<f64>,
    pub w_seed: u64,
}

impl LimitSample {
    pub fn at(&self, k: usize) -> &[f64] {
        &self.u_values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid_n)
    }
}

/// Left-point discretization of `Φ_t Σ_{u_k < t} Ψ_{u_k} ∂V_j V_{j'}(y_{u_k}) ΔW^{jj'}_k`.
pub fn limit_process_u<F: CoefficientField + ?Sized>(
    y_ref: &Trajectory,
    jac: &JacobianPair,
    w_increments: &[f64],
    field: &F,
    w_seed: u64,
) -> Result<LimitSample> {
    let (d, m) = (field.dim_state(), field.dim_noise());
    let n = y_ref.grid_n;
    if jac.grid_n != n || jac.dim != d || y_ref.dim != d {
        return Err(Error::Grid(format!(
            "trajectory ({n} steps, dim {}) and Jacobian ({} steps, dim {}) disagree",
            y_ref.dim, jac.grid_n, jac.dim
        )));
    }
    if w_increments.len() != n * m * m {
        return Err(Error::Grid(format!(
            "{} W entries for {n} steps of {m}x{m} increments",
            w_increments.len()
        )));
    }
    let mut ev = FieldEval::new(d, m);
    let mut acc = vec![0.0; d];
    let mut local = vec![0.0; d];
    let mut u_values = vec![0.0; (n + 1) * d];
    for k in 0..n {
        ev.eval(field, y_ref.at(k), Order::Second);
        let dw = &w_increments[k * m * m..(k + 1) * m * m];
        for r in 0..d {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += ev.dvv_at(r, i, j) * dw[j * m + i];
                }
            }
            local[r] = s;
        }
        let psi = jac.psi_at(k);
        for r in 0..d {
            acc[r] += (0..d).map(|c| psi[r * d + c] * local[c]).sum::<f64>();
        }
        let phi = jac.phi_at(k + 1);
        for r in 0..d {
            u_values[(k + 1) * d + r] = (0..d).map(|c| phi[r * d + c] * acc[c]).sum();
        }
    }
    Ok(LimitSample {
        dim: d,
        grid_n: n,
        u_values,
        w_seed,
    })
}
