//! `ε = Ψⁿ (y - yⁿ)` split into its leading Lévy-area part `ε̂` and the
//! residual `ε̃ = ε - ε̂`.

use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldEval, Order};
use crate::jacobian::JacobianPair;
use crate::lift::LevyAreaF;
use crate::schemes::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    pub dim: usize,
    pub grid_n: usize,
    /// Row-major `[(n + 1) × d]` each.
    pub epsilon: Vec<f64>,
    pub epsilon_hat: Vec<f64>,
    pub epsilon_tilde: Vec<f64>,
    /// `n^{2H - 1/2}`.
    pub scale: f64,
}

impl ErrorDecomposition {
    fn scaled_sup(&self, xs: &[f64]) -> f64 {
        let d = self.dim;
        let sup = (0..=self.grid_n)
            .map(|k| xs[k * d..(k + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        self.scale * sup
    }

    /// `n^{2H-1/2} sup_k |ε_{t_k}|`
    pub fn scaled_sup_epsilon(&self) -> f64 {
        self.scaled_sup(&self.epsilon)
    }

    pub fn scaled_sup_hat(&self) -> f64 {
        self.scaled_sup(&self.epsilon_hat)
    }

    pub fn scaled_sup_tilde(&self) -> f64 {
        self.scaled_sup(&self.epsilon_tilde)
    }
}

/// Decompose the error of `y_scheme` against `y_ref`.
///
/// `jac_n` carries `Ψⁿ` (derivatives averaged between the two
/// trajectories), `jac` carries `Ψ` along `y_ref`, and `f` is the centered
/// Lévy-area process on the same grid.
pub fn error_decomposition<F: CoefficientField + ?Sized>(
    y_ref: &Trajectory,
    y_scheme: &Trajectory,
    jac_n: &JacobianPair,
    jac: &JacobianPair,
    f: &LevyAreaF,
    field: &F,
) -> Result<ErrorDecomposition> {
    let (d, m) = (field.dim_state(), field.dim_noise());
    let n = y_ref.grid_n;
    let shapes_agree = y_scheme.grid_n == n
        && jac_n.grid_n == n
        && jac.grid_n == n
        && f.coarse_n == n
        && y_ref.dim == d
        && y_scheme.dim == d
        && jac_n.dim == d
        && jac.dim == d
        && f.dim == m;
    if !shapes_agree {
        return Err(Error::Grid("decomposition inputs live on different grids".into()));
    }
    if jac_n.psi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular(f64::NAN));
    }

    let mut epsilon = vec![0.0; (n + 1) * d];
    let mut epsilon_hat = vec![0.0; (n + 1) * d];
    let mut ev = FieldEval::new(d, m);
    let mut local = vec![0.0; d];
    for k in 0..=n {
        let psi_n = jac_n.psi_at(k);
        let (y, yn) = (y_ref.at(k), y_scheme.at(k));
        for r in 0..d {
            epsilon[k * d + r] = (0..d).map(|c| psi_n[r * d + c] * (y[c] - yn[c])).sum();
        }
        if k == n {
            break;
        }
        ev.eval(field, y, Order::Second);
        let df = f.increment(k);
        for r in 0..d {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += ev.dvv_at(r, i, j) * df[j * m + i];
                }
            }
            local[r] = s;
        }
        let psi = jac.psi_at(k);
        for r in 0..d {
            let step: f64 = (0..d).map(|c| psi[r * d + c] * local[c]).sum();
            epsilon_hat[(k + 1) * d + r] = epsilon_hat[k * d + r] + step;
        }
    }
    let epsilon_tilde = epsilon.iter().zip(&epsilon_hat).map(|(e, h)| e - h).collect();
    Ok(ErrorDecomposition {
        dim: d,
        grid_n: n,
        epsilon,
        epsilon_hat,
        epsilon_tilde,
        scale: (n as f64).powf(2.0 * f.hurst - 0.5),
    })
}
