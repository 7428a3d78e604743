//! Discrete Jacobian `Φ` of the flow along a trajectory and its inverse `Ψ`.
//!
//! One step multiplies by
//!
//! `J_k = I + ∂b h + Σ_j ∂V_j δB^j_k + ½ Σ_j ∂(∂V_j V_j) h^{2H}`,
//!
//! the derivative of the modified Euler step map, so that `Φ_{k+1} = J_k Φ_k`
//! and `Ψ_{k+1} = Ψ_k J_k^{-1}`. After each inversion one Newton–Schulz
//! sweep pulls `Φ Ψ` back to the identity.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fbm::pow2h;
use crate::field::{CoefficientField, FieldEval, Order};
use crate::schemes::Trajectory;

/// Largest admissible condition number of `Φ`.
pub const MAX_CONDITION: f64 = 1e10;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS_NODES: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    pub dim: usize,
    pub grid_n: usize,
    /// Row-major `[(grid_n + 1) × d × d]`.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl JacobianPair {
    pub fn phi_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.phi[k * dd..(k + 1) * dd]
    }

    pub fn psi_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.psi[k * dd..(k + 1) * dd]
    }

    /// Keep every `factor`-th node.
    pub fn restrict(&self, factor: usize) -> Result<JacobianPair> {
        if factor == 0 || self.grid_n % factor != 0 {
            return Err(Error::Divisibility {
                what: "jacobian restrict",
                n: self.grid_n,
                factor,
            });
        }
        let pick = |xs: &[f64]| -> Vec<f64> {
            let dd = self.dim * self.dim;
            (0..=self.grid_n / factor)
                .flat_map(|k| xs[k * factor * dd..(k * factor + 1) * dd].iter().copied())
                .collect()
        };
        Ok(JacobianPair {
            dim: self.dim,
            grid_n: self.grid_n / factor,
            phi: pick(&self.phi),
            psi: pick(&self.psi),
        })
    }

    /// Largest `|Φ_k Ψ_k − I|` entry over all nodes.
    pub fn inverse_defect(&self) -> f64 {
        let d = self.dim;
        (0..=self.grid_n)
            .map(|k| {
                let p = DMatrix::from_row_slice(d, d, self.phi_at(k));
                let q = DMatrix::from_row_slice(d, d, self.psi_at(k));
                (p * q - DMatrix::identity(d, d)).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Step matrix `J_k` from derivatives already evaluated at the left node.
fn step_matrix(ev: &FieldEval, db: &[f64], h: f64, correction: f64, out: &mut DMatrix<f64>) {
    let (d, m) = (ev.d, ev.m);
    for k in 0..d {
        for l in 0..d {
            let mut x = if k == l { 1.0 } else { 0.0 };
            x += ev.db[k * d + l] * h;
            for j in 0..m {
                x += ev.dv[(k * d + l) * m + j] * db[j];
                x += correction * ev.dvv_jac[((k * d + l) * m + j) * m + j];
            }
            out[(k, l)] = x;
        }
    }
}

/// `‖Φ‖_F ‖Ψ‖_F`, an upper bound for the spectral condition number of `Φ`.
fn condition(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    p.norm() * q.norm()
}

fn check_inputs<F: CoefficientField + ?Sized>(
    traj: &Trajectory,
    increments: &[f64],
    h: f64,
    field: &F,
) -> Result<()> {
    let (d, m) = (field.dim_state(), field.dim_noise());
    if traj.dim != d {
        return Err(Error::Dimension(format!(
            "trajectory has dimension {}, field has {d}",
            traj.dim
        )));
    }
    if increments.len() != traj.grid_n * m {
        return Err(Error::Grid(format!(
            "{} increments for a {}-step trajectory with {m} noises",
            increments.len(),
            traj.grid_n
        )));
    }
    if (h * traj.grid_n as f64 - traj.horizon).abs() > 1e-9 * traj.horizon {
        return Err(Error::Grid(format!(
            "step {h} does not match the trajectory grid"
        )));
    }
    Ok(())
}

/// Shared propagation given a callback that fills `J_k`.
fn propagate(
    d: usize,
    n: usize,
    mut fill: impl FnMut(usize, &mut DMatrix<f64>),
) -> Result<JacobianPair> {
    let dd = d * d;
    let mut phi = Vec::with_capacity((n + 1) * dd);
    let mut psi = Vec::with_capacity((n + 1) * dd);
    let eye = DMatrix::<f64>::identity(d, d);
    let mut p = eye.clone();
    let mut q = eye.clone();
    push_row_major(&p, &mut phi);
    push_row_major(&q, &mut psi);
    let mut jk = DMatrix::<f64>::zeros(d, d);
    for k in 0..n {
        fill(k, &mut jk);
        let inv = jk
            .clone()
            .try_inverse()
            .ok_or(Error::IllConditioned {
                node: k,
                condition: f64::INFINITY,
            })?;
        p = &jk * &p;
        q = &q * inv;
        // Newton–Schulz: Ψ ← Ψ (2I − Φ Ψ).
        let residual = &p * &q;
        q = &q * (&eye * 2.0 - residual);
        let cond = condition(&p, &q);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned {
                node: k + 1,
                condition: cond,
            });
        }
        push_row_major(&p, &mut phi);
        push_row_major(&q, &mut psi);
    }
    Ok(JacobianPair {
        dim: d,
        grid_n: n,
        phi,
        psi,
    })
}

fn push_row_major(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
}

/// `(Φ, Ψ)` along `y_ref` on its own grid.
pub fn jacobian_pair<F: CoefficientField + ?Sized>(
    y_ref: &Trajectory,
    increments: &[f64],
    h: f64,
    hurst: f64,
    field: &F,
) -> Result<JacobianPair> {
    check_inputs(y_ref, increments, h, field)?;
    let (d, m) = (field.dim_state(), field.dim_noise());
    let correction = 0.5 * pow2h(h, hurst);
    let mut ev = FieldEval::new(d, m);
    propagate(d, y_ref.grid_n, |k, jk| {
        ev.eval(field, y_ref.at(k), Order::Jacobian);
        step_matrix(&ev, &increments[k * m..(k + 1) * m], h, correction, jk);
    })
}

/// `(Φⁿ, Ψⁿ)` with every derivative averaged over the segment from
/// `y_scheme` to `y_ref` (four-point Gauss–Legendre in the segment
/// parameter). Reduces to [`jacobian_pair`] when the two trajectories agree.
pub fn jacobian_pair_averaged<F: CoefficientField + ?Sized>(
    y_ref: &Trajectory,
    y_scheme: &Trajectory,
    increments: &[f64],
    h: f64,
    hurst: f64,
    field: &F,
) -> Result<JacobianPair> {
    check_inputs(y_ref, increments, h, field)?;
    if y_scheme.grid_n != y_ref.grid_n || y_scheme.dim != y_ref.dim {
        return Err(Error::Grid("scheme and reference trajectories differ in shape".into()));
    }
    let (d, m) = (field.dim_state(), field.dim_noise());
    let correction = 0.5 * pow2h(h, hurst);
    let mut ev = FieldEval::new(d, m);
    let mut avg = FieldEval::new(d, m);
    let mut point = vec![0.0; d];
    propagate(d, y_ref.grid_n, |k, jk| {
        let (a, b) = (y_scheme.at(k), y_ref.at(k));
        avg.db.iter_mut().for_each(|x| *x = 0.0);
        avg.dv.iter_mut().for_each(|x| *x = 0.0);
        avg.dvv_jac.iter_mut().for_each(|x| *x = 0.0);
        for &(lambda, w) in &GAUSS_NODES {
            for r in 0..d {
                point[r] = a[r] + lambda * (b[r] - a[r]);
            }
            ev.eval(field, &point, Order::Jacobian);
            for (s, x) in avg.db.iter_mut().zip(&ev.db) {
                *s += w * x;
            }
            for (s, x) in avg.dv.iter_mut().zip(&ev.dv) {
                *s += w * x;
            }
            for (s, x) in avg.dvv_jac.iter_mut().zip(&ev.dvv_jac) {
                *s += w * x;
            }
        }
        step_matrix(&avg, &increments[k * m..(k + 1) * m], h, correction, jk);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::generate_fbm;
    use crate::field::{ConstantField, GeometricField, RotationField};
    use crate::schemes::{reference_solution, run_scheme, SchemeKind};

    #[test]
    fn constant_field_gives_identity() {
        let f = ConstantField {
            d: 2,
            m: 1,
            matrix: vec![1.0, 2.0],
        };
        let p = generate_fbm(0.4, 64, 1.0, 1, 2).unwrap();
        let y = run_scheme(SchemeKind::Classical, &p, 64, &f, &[0.0, 0.0]).unwrap();
        let jp = jacobian_pair(&y, &p.increments(), p.step(), 0.4, &f).unwrap();
        for k in 0..=64 {
            assert_eq!(jp.phi_at(k), &[1.0, 0.0, 0.0, 1.0]);
            assert_eq!(jp.psi_at(k), &[1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn scalar_geometric_jacobian_is_exponential() {
        // Φ follows the modified Euler recursion for the linear equation, so
        // it carries the same O(n^{1/2-2H}) error as the scheme.
        let f = GeometricField::default();
        let p = generate_fbm(0.4, 1 << 14, 0.25, 1, 8).unwrap();
        let worst = |factor: usize| {
            let coarse = p.restrict(factor).unwrap();
            let y = reference_solution(&p, &f, &[1.0], coarse.n).unwrap();
            let jp = jacobian_pair(&y, &coarse.increments(), coarse.step(), 0.4, &f).unwrap();
            (0..=coarse.n)
                .map(|k| (jp.phi_at(k)[0] / coarse.values[0][k].exp() - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let (rough, fine) = (worst(512), worst(32));
        assert!(fine < rough && fine < 0.1, "{rough} {fine}");
    }

    #[test]
    fn inverse_consistency_on_rotation_field() {
        let f = RotationField::default();
        let p = generate_fbm(0.4, 1 << 12, 1.0, 2, 15).unwrap();
        let y = reference_solution(&p, &f, &[0.2, -0.4], 128).unwrap();
        let c = p.restrict(32).unwrap();
        let jp = jacobian_pair(&y, &c.increments(), c.step(), 0.4, &f).unwrap();
        assert!(jp.inverse_defect() < 1e-8);
        let yn = run_scheme(SchemeKind::Modified, &p, 128, &f, &[0.2, -0.4]).unwrap();
        let jn = jacobian_pair_averaged(&y, &yn, &c.increments(), c.step(), 0.4, &f).unwrap();
        assert!(jn.inverse_defect() < 1e-8);
    }

    #[test]
    fn averaged_pair_reduces_on_equal_trajectories() {
        let f = RotationField::default();
        let p = generate_fbm(0.4, 256, 1.0, 2, 3).unwrap();
        let y = run_scheme(SchemeKind::Modified, &p, 256, &f, &[0.1, 0.1]).unwrap();
        let a = jacobian_pair(&y, &p.increments(), p.step(), 0.4, &f).unwrap();
        let b = jacobian_pair_averaged(&y, &y, &p.increments(), p.step(), 0.4, &f).unwrap();
        for (x, z) in a.phi.iter().zip(&b.phi) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn step_matrix_is_derivative_of_modified_step() {
        use crate::schemes::modified_euler;
        let f = RotationField::default();
        let y0 = [0.3, 1.1];
        let inc = [0.15, -0.08];
        let h = 1.0 / 64.0;
        let y = modified_euler(&inc, h, 0.4, &f, &y0).unwrap();
        let jp = jacobian_pair(&y, &inc, h, 0.4, &f).unwrap();
        let eps = 1e-6;
        for l in 0..2 {
            let mut up = y0;
            let mut dn = y0;
            up[l] += eps;
            dn[l] -= eps;
            let yu = modified_euler(&inc, h, 0.4, &f, &up).unwrap();
            let yd = modified_euler(&inc, h, 0.4, &f, &dn).unwrap();
            for k in 0..2 {
                let fd = (yu.terminal()[k] - yd.terminal()[k]) / (2.0 * eps);
                assert!((jp.phi_at(1)[k * 2 + l] - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let f = GeometricField::default();
        let p = generate_fbm(0.4, 64, 1.0, 1, 2).unwrap();
        let y = run_scheme(SchemeKind::Modified, &p, 64, &f, &[1.0]).unwrap();
        assert!(jacobian_pair(&y, &p.increments()[..32], p.step(), 0.4, &f).is_err());
        assert!(jacobian_pair(&y, &p.increments(), 0.5, 0.4, &f).is_err());
    }
}
