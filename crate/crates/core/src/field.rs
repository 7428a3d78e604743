//! Coefficient fields `b` and `V = (V_1, …, V_m)` and their derivatives.
//!
//! Implementors supply `b`, `∂b`, `V`, `∂V` and the second derivatives of
//! `V`. Every iterated field the schemes need (`∂V_i V_j`, its Jacobian,
//! `∂(∂V_i V_j) V_k`) is assembled from those by the helpers at the bottom
//! of this module.
//!
//! Flat layouts, all row-major:
//!
//! | quantity            | shape       | entry                       |
//! |---------------------|-------------|-----------------------------|
//! | `b`                 | `d`         | `b^k`                       |
//! | `∂b`                | `d×d`       | `∂_l b^k` at `k*d + l`      |
//! | `V`                 | `d×m`       | `V^k_j` at `k*m + j`        |
//! | `∂V`                | `d×d×m`     | `∂_l V^k_j`                 |
//! | `∂²V`               | `d×d×d×m`   | `∂_l ∂_p V^k_j`             |
//! | `∂V_i V_j`          | `d×m×m`     | `Σ_l ∂_l V^k_i V^l_j`       |
//! | `∂(∂V_i V_j)`       | `d×d×m×m`   | `∂_l (∂V_i V_j)^k`          |
//! | `∂(∂V_i V_j) V_q`   | `d×m×m×m`   |                             |

/// User-supplied SDE coefficients. Evaluation must be reentrant.
pub trait CoefficientField: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn name(&self) -> &str;

    fn drift(&self, y: &[f64], out: &mut [f64]);
    fn drift_jacobian(&self, y: &[f64], out: &mut [f64]);
    fn diffusion(&self, y: &[f64], out: &mut [f64]);
    fn diffusion_jacobian(&self, y: &[f64], out: &mut [f64]);
    fn diffusion_hessian(&self, y: &[f64], out: &mut [f64]);

    /// Closed-form solution at time `t` given `B_t`, when one is known.
    fn exact_solution(&self, _y0: &[f64], _b_t: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }
}

/// Allocating evaluators, convenient outside hot loops.
pub trait FieldExt: CoefficientField {
    fn eval_b(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state()];
        self.drift(y, &mut out);
        out
    }

    fn eval_db(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim_state();
        let mut out = vec![0.0; d * d];
        self.drift_jacobian(y, &mut out);
        out
    }

    fn eval_v(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state() * self.dim_noise()];
        self.diffusion(y, &mut out);
        out
    }

    fn eval_dv(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim_state();
        let mut out = vec![0.0; d * d * self.dim_noise()];
        self.diffusion_jacobian(y, &mut out);
        out
    }

    fn eval_dvv(&self, y: &[f64]) -> Vec<f64> {
        let mut ev = FieldEval::new(self.dim_state(), self.dim_noise());
        ev.eval(self, y, Order::Second);
        ev.dvv
    }

    fn eval_dvv_jacobian(&self, y: &[f64]) -> Vec<f64> {
        let mut ev = FieldEval::new(self.dim_state(), self.dim_noise());
        ev.eval(self, y, Order::Jacobian);
        ev.dvv_jac
    }

    fn eval_dddvvv(&self, y: &[f64]) -> Vec<f64> {
        let mut ev = FieldEval::new(self.dim_state(), self.dim_noise());
        ev.eval(self, y, Order::Third);
        ev.dddvvv
    }
}

impl<F: CoefficientField + ?Sized> FieldExt for F {}

/// How much of the derivative tower to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    /// `b`, `V`.
    First,
    /// adds `∂V`, `∂V_i V_j`.
    Second,
    /// adds `∂b`, `∂²V`, `∂(∂V_i V_j)`.
    Jacobian,
    /// adds `∂(∂V_i V_j) V_q`.
    Third,
}

/// Preallocated buffers for one evaluation point.
#[derive(Debug, Clone)]
pub struct FieldEval {
    pub d: usize,
    pub m: usize,
    pub b: Vec<f64>,
    pub db: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub hess: Vec<f64>,
    pub dvv: Vec<f64>,
    pub dvv_jac: Vec<f64>,
    pub dddvvv: Vec<f64>,
}

impl FieldEval {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            b: vec![0.0; d],
            db: vec![0.0; d * d],
            v: vec![0.0; d * m],
            dv: vec![0.0; d * d * m],
            hess: vec![0.0; d * d * d * m],
            dvv: vec![0.0; d * m * m],
            dvv_jac: vec![0.0; d * d * m * m],
            dddvvv: vec![0.0; d * m * m * m],
        }
    }

    pub fn eval<F: CoefficientField + ?Sized>(&mut self, field: &F, y: &[f64], order: Order) {
        field.drift(y, &mut self.b);
        field.diffusion(y, &mut self.v);
        if order >= Order::Second {
            field.diffusion_jacobian(y, &mut self.dv);
            iterated(&self.dv, &self.v, self.d, self.m, &mut self.dvv);
        }
        if order >= Order::Jacobian {
            field.drift_jacobian(y, &mut self.db);
            field.diffusion_hessian(y, &mut self.hess);
            iterated_jacobian(&self.hess, &self.dv, &self.v, self.d, self.m, &mut self.dvv_jac);
        }
        if order >= Order::Third {
            third_iterated(&self.dvv_jac, &self.v, self.d, self.m, &mut self.dddvvv);
        }
    }

    #[inline]
    pub fn dvv_at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.dvv[(k * self.m + i) * self.m + j]
    }

    /// `∂_l V^k_j`
    #[inline]
    pub fn dv_at(&self, k: usize, l: usize, j: usize) -> f64 {
        self.dv[(k * self.d + l) * self.m + j]
    }
}

/// `(∂V_i V_j)^k = Σ_l ∂_l V^k_i V^l_j`
pub fn iterated(dv: &[f64], v: &[f64], d: usize, m: usize, out: &mut [f64]) {
    for k in 0..d {
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..d {
                    s += dv[(k * d + l) * m + i] * v[l * m + j];
                }
                out[(k * m + i) * m + j] = s;
            }
        }
    }
}

/// `∂_l (∂V_i V_j)^k = Σ_p ∂_l ∂_p V^k_i V^p_j + ∂_p V^k_i ∂_l V^p_j`
pub fn iterated_jacobian(hess: &[f64], dv: &[f64], v: &[f64], d: usize, m: usize, out: &mut [f64]) {
    for k in 0..d {
        for l in 0..d {
            for i in 0..m {
                for j in 0..m {
                    let mut s = 0.0;
                    for p in 0..d {
                        s += hess[((k * d + l) * d + p) * m + i] * v[p * m + j]
                            + dv[(k * d + p) * m + i] * dv[(p * d + l) * m + j];
                    }
                    out[((k * d + l) * m + i) * m + j] = s;
                }
            }
        }
    }
}

/// `(∂(∂V_i V_j) V_q)^k = Σ_l ∂_l (∂V_i V_j)^k V^l_q`
pub fn third_iterated(dvv_jac: &[f64], v: &[f64], d: usize, m: usize, out: &mut [f64]) {
    for k in 0..d {
        for i in 0..m {
            for j in 0..m {
                for q in 0..m {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += dvv_jac[((k * d + l) * m + i) * m + j] * v[l * m + q];
                    }
                    out[((k * m + i) * m + j) * m + q] = s;
                }
            }
        }
    }
}

/// `d = m = 1`, `b = 0`, `V(y) = σ y`. Solution `y_0 exp(σ B_t)`.
#[derive(Debug, Clone, Copy)]
pub struct GeometricField {
    pub sigma: f64,
}

impl Default for GeometricField {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl CoefficientField for GeometricField {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_noise(&self) -> usize {
        1
    }
    fn name(&self) -> &str {
        "geometric"
    }
    fn drift(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn drift_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * y[0];
    }
    fn diffusion_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn diffusion_hessian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn exact_solution(&self, y0: &[f64], b_t: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(vec![y0[0] * (self.sigma * b_t[0]).exp()])
    }
}

/// Bounded, non-commuting planar field built from rotations:
///
/// ```text
/// V_1(y) = (cos y₂, sin y₂)
/// V_2(y) = (sin y₁, cos y₁)
/// b(y)   = β (−sin y₁, cos y₂)
/// ```
///
/// All derivatives are bounded, `[V_1, V_2] ≠ 0` and `∂V_j V_j ≠ 0`, so the
/// classical Euler scheme picks up an uncorrected drift.
#[derive(Debug, Clone, Copy)]
pub struct RotationField {
    pub drift_scale: f64,
}

impl Default for RotationField {
    fn default() -> Self {
        Self { drift_scale: 0.5 }
    }
}

impl CoefficientField for RotationField {
    fn dim_state(&self) -> usize {
        2
    }
    fn dim_noise(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "rotation"
    }
    fn drift(&self, y: &[f64], out: &mut [f64]) {
        out[0] = -self.drift_scale * y[0].sin();
        out[1] = self.drift_scale * y[1].cos();
    }
    fn drift_jacobian(&self, y: &[f64], out: &mut [f64]) {
        out[0] = -self.drift_scale * y[0].cos();
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = -self.drift_scale * y[1].sin();
    }
    fn diffusion(&self, y: &[f64], out: &mut [f64]) {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        // out[k*2 + j]
        out[0] = c2;
        out[1] = s1;
        out[2] = s2;
        out[3] = c1;
    }
    fn diffusion_jacobian(&self, y: &[f64], out: &mut [f64]) {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        let idx = |k: usize, l: usize, j: usize| (k * 2 + l) * 2 + j;
        out.iter_mut().for_each(|x| *x = 0.0);
        out[idx(0, 1, 0)] = -s2;
        out[idx(1, 1, 0)] = c2;
        out[idx(0, 0, 1)] = c1;
        out[idx(1, 0, 1)] = -s1;
    }
    fn diffusion_hessian(&self, y: &[f64], out: &mut [f64]) {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        // out[((k*2 + l)*2 + p)*2 + j] = ∂_l ∂_p V^k_j
        out.iter_mut().for_each(|x| *x = 0.0);
        let idx = |k: usize, l: usize, p: usize, j: usize| ((k * 2 + l) * 2 + p) * 2 + j;
        out[idx(0, 1, 1, 0)] = -c2;
        out[idx(1, 1, 1, 0)] = -s2;
        out[idx(0, 0, 0, 1)] = -s1;
        out[idx(1, 0, 0, 1)] = -c1;
    }
}

/// Constant diffusion matrix with zero drift.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub d: usize,
    pub m: usize,
    /// Row-major `d × m`.
    pub matrix: Vec<f64>,
}

impl CoefficientField for ConstantField {
    fn dim_state(&self) -> usize {
        self.d
    }
    fn dim_noise(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        "constant"
    }
    fn drift(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn drift_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn diffusion(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
    fn diffusion_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn diffusion_hessian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Scalar state with two noises: `V_1(y) = y`, `V_2(y) = c`, `b = 0`.
///
/// Only `∂V_1 V_1 = y` and `∂V_1 V_2 = c` are nonzero, so the limit of the
/// renormalized error depends on the off-diagonal entry `W^{12}`.
#[derive(Debug, Clone, Copy)]
pub struct MixedScalarField {
    pub additive: f64,
}

impl CoefficientField for MixedScalarField {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_noise(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "mixed"
    }
    fn drift(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn drift_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0];
        out[1] = self.additive;
    }
    fn diffusion_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = 0.0;
    }
    fn diffusion_hessian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Built-in fields selectable by name.
pub fn builtin(name: &str) -> Option<Box<dyn CoefficientField>> {
    match name {
        "geometric" => Some(Box::new(GeometricField::default())),
        "rotation" => Some(Box::new(RotationField::default())),
        "mixed" => Some(Box::new(MixedScalarField { additive: 1.0 })),
        _ => None,
    }
}

pub const BUILTIN_NAMES: &[&str] = &["geometric", "rotation", "mixed"];

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn probe(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    /// Central difference of a vector-valued map, laid out as `[out_index * d + l]`.
    fn central_diff(f: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64], step: f64) -> Vec<f64> {
        let d = y.len();
        let base = f(y).len();
        let mut out = vec![0.0; base * d];
        for l in 0..d {
            let mut up = y.to_vec();
            let mut dn = y.to_vec();
            up[l] += step;
            dn[l] -= step;
            let (fu, fd) = (f(&up), f(&dn));
            for r in 0..base {
                out[r * d + l] = (fu[r] - fd[r]) / (2.0 * step);
            }
        }
        out
    }

    fn check_field(field: &dyn CoefficientField) {
        let d = field.dim_state();
        let m = field.dim_noise();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let y = probe(&mut rng, d);
            let fd_b = central_diff(&|x| field.eval_b(x), &y, 1e-5);
            for (a, b) in fd_b.iter().zip(field.eval_db(&y)) {
                assert!((a - b).abs() < 1e-8, "{}: ∂b", field.name());
            }
            // ∂V: rows of V are (k, j); finite differences give [(k*m + j)*d + l].
            let fd_v = central_diff(&|x| field.eval_v(x), &y, 1e-5);
            let dv = field.eval_dv(&y);
            for k in 0..d {
                for l in 0..d {
                    for j in 0..m {
                        let want = fd_v[(k * m + j) * d + l];
                        assert!((dv[(k * d + l) * m + j] - want).abs() < 1e-8, "{}: ∂V", field.name());
                    }
                }
            }
            let fd_dvv = central_diff(&|x| field.eval_dvv(x), &y, 1e-5);
            let jac = field.eval_dvv_jacobian(&y);
            for k in 0..d {
                for l in 0..d {
                    for i in 0..m {
                        for j in 0..m {
                            let want = fd_dvv[((k * m + i) * m + j) * d + l];
                            let got = jac[((k * d + l) * m + i) * m + j];
                            assert!((got - want).abs() < 1e-7, "{}: ∂(∂VV)", field.name());
                        }
                    }
                }
            }
            // Consistency of ∂V_i V_j with ∂V · V.
            let v = field.eval_v(&y);
            let dvv = field.eval_dvv(&y);
            for k in 0..d {
                for i in 0..m {
                    for j in 0..m {
                        let direct: f64 = (0..d).map(|l| dv[(k * d + l) * m + i] * v[l * m + j]).sum();
                        assert!((dvv[(k * m + i) * m + j] - direct).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        check_field(&GeometricField { sigma: 0.7 });
        check_field(&RotationField::default());
        check_field(&MixedScalarField { additive: 0.5 });
        check_field(&ConstantField {
            d: 2,
            m: 3,
            matrix: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        });
    }

    #[test]
    fn rotation_field_does_not_commute() {
        let f = RotationField::default();
        let y = [0.3, -1.1];
        let dvv = f.eval_dvv(&y);
        let bracket: Vec<f64> = (0..2).map(|k| dvv[k * 4 + 2] - dvv[k * 4 + 1]).collect();
        assert!(bracket.iter().any(|x| x.abs() > 1e-3));
        assert!(dvv[0].abs() + dvv[4].abs() > 1e-3);
    }

    #[test]
    fn third_iterated_for_geometric() {
        let f = GeometricField { sigma: 2.0 };
        assert_eq!(f.eval_dvv(&[3.0]), vec![12.0]);
        assert_eq!(f.eval_dddvvv(&[3.0]), vec![24.0]);
    }
}
