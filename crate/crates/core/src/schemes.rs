//! Time-discrete schemes on a uniform grid and the fine-grid reference.
//!
//! Every scheme advances `y_{k+1} = y_k + b(y_k) h + V(y_k) δB_k + c_k` and
//! differs only in the second-order correction `c_k`:
//!
//! | scheme        | `c_k`                                                   |
//! |---------------|---------------------------------------------------------|
//! | classical     | 0                                                       |
//! | modified      | `½ Σ_j ∂V_j V_j h^{2H}`                                 |
//! | taylor        | `Σ_{ij} ∂V_i V_j 𝔹^{ij}`                                |
//! | wong_zakai    | `½ Σ_{ij} ∂V_i V_j δB^i δB^j`                           |
//! | third_order   | wong_zakai + `⅙ Σ_{ijq} ∂(∂V_i V_j) V_q δB^i δB^j δB^q` |

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fbm::{fmt_f64, pow2h, FbmPath};
use crate::field::{CoefficientField, FieldEval, Order};
use crate::lift::{lift_geometric, RoughLift};

/// Minimum ratio between the reference grid and the grid it is compared on.
pub const REFERENCE_MIN_REFINEMENT: usize = 32;

/// The reference may move the measured error by at most this fraction.
pub const SELF_CONSISTENCY_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Classical,
    Modified,
    Taylor,
    WongZakai,
    ThirdOrder,
    Reference,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Classical,
        SchemeKind::Modified,
        SchemeKind::Taylor,
        SchemeKind::WongZakai,
        SchemeKind::ThirdOrder,
        SchemeKind::Reference,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SchemeKind::Classical => "classical",
            SchemeKind::Modified => "modified",
            SchemeKind::Taylor => "taylor",
            SchemeKind::WongZakai => "wong_zakai",
            SchemeKind::ThirdOrder => "third_order",
            SchemeKind::Reference => "reference",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown scheme `{s}`")))
    }
}

/// Scheme output on the nodes `t_k = k T / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid_n: usize,
    pub horizon: f64,
    pub dim: usize,
    pub scheme: SchemeKind,
    /// Row-major `[(grid_n + 1) × d]`.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        self.horizon / self.grid_n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.grid_n)
            .map(|k| k as f64 * self.horizon / self.grid_n as f64)
            .collect()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid_n)
    }

    /// Keep every `factor`-th node.
    pub fn restrict(&self, factor: usize) -> Result<Trajectory> {
        if factor == 0 || self.grid_n % factor != 0 {
            return Err(Error::Divisibility {
                what: "trajectory restrict",
                n: self.grid_n,
                factor,
            });
        }
        let d = self.dim;
        let values = (0..=self.grid_n / factor)
            .flat_map(|k| self.at(k * factor).iter().copied())
            .collect::<Vec<_>>();
        debug_assert_eq!(values.len(), (self.grid_n / factor + 1) * d);
        Ok(Trajectory {
            grid_n: self.grid_n / factor,
            values,
            ..self.clone()
        })
    }

    /// CSV with header `t,y1,...,yd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|k| format!("y{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times().into_iter().enumerate() {
            write!(w, "{}", fmt_f64(t))?;
            for x in self.at(k) {
                write!(w, ",{}", fmt_f64(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn grid_size<F: CoefficientField + ?Sized>(
    field: &F,
    increments: &[f64],
    y0: &[f64],
) -> Result<usize> {
    let (d, m) = (field.dim_state(), field.dim_noise());
    if y0.len() != d {
        return Err(Error::Dimension(format!(
            "initial condition has {} entries, field state dimension is {d}",
            y0.len()
        )));
    }
    if m == 0 || increments.len() % m != 0 || increments.is_empty() {
        return Err(Error::Dimension(format!(
            "{} increments do not form whole steps of {m} noises",
            increments.len()
        )));
    }
    Ok(increments.len() / m)
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Core loop shared by all schemes.
fn advance<F: CoefficientField + ?Sized>(
    kind: SchemeKind,
    field: &F,
    increments: &[f64],
    areas: Option<&[f64]>,
    h: f64,
    hurst: f64,
    y0: &[f64],
) -> Result<Trajectory> {
    let n = grid_size(field, increments, y0)?;
    check_step(h)?;
    let (d, m) = (field.dim_state(), field.dim_noise());
    if let Some(a) = areas {
        if a.len() != n * m * m {
            return Err(Error::Dimension(format!(
                "{} area entries for {n} steps of {m} noises",
                a.len()
            )));
        }
    }
    let order = match kind {
        SchemeKind::Classical => Order::First,
        SchemeKind::Modified | SchemeKind::Taylor | SchemeKind::WongZakai => Order::Second,
        SchemeKind::ThirdOrder | SchemeKind::Reference => Order::Third,
    };
    let correction = 0.5 * pow2h(h, hurst);
    let mut ev = FieldEval::new(d, m);
    let mut values = Vec::with_capacity((n + 1) * d);
    values.extend_from_slice(y0);
    let mut y = y0.to_vec();
    let mut next = vec![0.0; d];

    for k in 0..n {
        let db = &increments[k * m..(k + 1) * m];
        ev.eval(field, &y, order);
        for r in 0..d {
            let mut acc = ev.b[r] * h;
            for j in 0..m {
                acc += ev.v[r * m + j] * db[j];
            }
            match kind {
                SchemeKind::Classical => {}
                SchemeKind::Modified => {
                    for j in 0..m {
                        acc += correction * ev.dvv_at(r, j, j);
                    }
                }
                SchemeKind::Taylor => {
                    let a = &areas.expect("taylor scheme needs areas")[k * m * m..(k + 1) * m * m];
                    // (∂V_i V_j) differentiates V_i along V_j, so it multiplies ∫δB^j dB^i.
                    for i in 0..m {
                        for j in 0..m {
                            acc += ev.dvv_at(r, i, j) * a[j * m + i];
                        }
                    }
                }
                SchemeKind::WongZakai | SchemeKind::ThirdOrder | SchemeKind::Reference => {
                    for i in 0..m {
                        for j in 0..m {
                            acc += 0.5 * ev.dvv_at(r, i, j) * db[i] * db[j];
                        }
                    }
                    if kind != SchemeKind::WongZakai {
                        for i in 0..m {
                            for j in 0..m {
                                let bij = db[i] * db[j];
                                for q in 0..m {
                                    acc += ev.dddvvv[((r * m + i) * m + j) * m + q] * bij * db[q]
                                        / 6.0;
                                }
                            }
                        }
                    }
                }
            }
            next[r] = y[r] + acc;
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergent(h * (k + 1) as f64));
        }
        y.copy_from_slice(&next);
        values.extend_from_slice(&y);
    }

    Ok(Trajectory {
        grid_n: n,
        horizon: h * n as f64,
        dim: d,
        scheme: kind,
        values,
    })
}

/// `y_{k+1} = y_k + b h + V δB_k`.
pub fn classical_euler<F: CoefficientField + ?Sized>(
    increments: &[f64],
    h: f64,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    advance(SchemeKind::Classical, field, increments, None, h, 0.5, y0)
}

/// Classical Euler plus the deterministic correction `½ Σ_j ∂V_j V_j h^{2H}`.
pub fn modified_euler<F: CoefficientField + ?Sized>(
    increments: &[f64],
    h: f64,
    hurst: f64,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::HurstDomain { hurst, range: "(0, 1)" });
    }
    advance(SchemeKind::Modified, field, increments, None, h, hurst, y0)
}

/// Second-order Taylor scheme driven by the lifted increments.
pub fn taylor_milstein<F: CoefficientField + ?Sized>(
    lift: &RoughLift,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    if lift.dim != field.dim_noise() {
        return Err(Error::Dimension(format!(
            "lift has {} components, field has {} noises",
            lift.dim,
            field.dim_noise()
        )));
    }
    advance(
        SchemeKind::Taylor,
        field,
        &lift.delta_b,
        Some(&lift.bb),
        lift.step(),
        lift.hurst,
        y0,
    )
}

/// Taylor scheme with `𝔹^{ij}` replaced by `½ δB^i δB^j`.
pub fn wong_zakai_milstein<F: CoefficientField + ?Sized>(
    increments: &[f64],
    h: f64,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    advance(SchemeKind::WongZakai, field, increments, None, h, 0.5, y0)
}

/// Wong–Zakai scheme with the cubic term.
pub fn third_order<F: CoefficientField + ?Sized>(
    increments: &[f64],
    h: f64,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    advance(SchemeKind::ThirdOrder, field, increments, None, h, 0.5, y0)
}

/// Run `kind` on the coarse grid of `path` with `coarse_n` steps.
///
/// The Taylor scheme lifts the fine path; every other scheme only sees the
/// coarse increments. `Reference` delegates to [`reference_solution`].
pub fn run_scheme<F: CoefficientField + ?Sized>(
    kind: SchemeKind,
    path: &FbmPath,
    coarse_n: usize,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    if path.components() != field.dim_noise() {
        return Err(Error::Dimension(format!(
            "path has {} components, field has {} noises",
            path.components(),
            field.dim_noise()
        )));
    }
    match kind {
        SchemeKind::Taylor => taylor_milstein(&lift_geometric(path, coarse_n)?, field, y0),
        SchemeKind::Reference => reference_solution(path, field, y0, coarse_n),
        _ => {
            let coarse = path.restrict(path.n / coarse_n.max(1)).and_then(|p| {
                if p.n == coarse_n {
                    Ok(p)
                } else {
                    Err(Error::Divisibility {
                        what: "scheme grid",
                        n: path.n,
                        factor: coarse_n,
                    })
                }
            })?;
            let inc = coarse.increments();
            let h = coarse.step();
            match kind {
                SchemeKind::Classical => classical_euler(&inc, h, field, y0),
                SchemeKind::Modified => modified_euler(&inc, h, path.hurst, field, y0),
                SchemeKind::WongZakai => wong_zakai_milstein(&inc, h, field, y0),
                SchemeKind::ThirdOrder => third_order(&inc, h, field, y0),
                SchemeKind::Taylor | SchemeKind::Reference => unreachable!(),
            }
        }
    }
}

/// Third-order scheme on the full fine grid, restricted to `coarse_n` nodes.
///
/// Used as the stand-in for the exact solution. The fine grid must be at
/// least [`REFERENCE_MIN_REFINEMENT`] times the coarse one.
pub fn reference_solution<F: CoefficientField + ?Sized>(
    fine_path: &FbmPath,
    field: &F,
    y0: &[f64],
    coarse_n: usize,
) -> Result<Trajectory> {
    if coarse_n == 0 || fine_path.n % coarse_n != 0 {
        return Err(Error::Divisibility {
            what: "reference grid",
            n: fine_path.n,
            factor: coarse_n,
        });
    }
    let factor = fine_path.n / coarse_n;
    if factor < REFERENCE_MIN_REFINEMENT {
        return Err(Error::Domain(format!(
            "reference needs a fine grid at least {REFERENCE_MIN_REFINEMENT}x the coarse one, got {factor}x"
        )));
    }
    let fine = third_order(&fine_path.increments(), fine_path.step(), field, y0)?;
    let mut out = fine.restrict(factor)?;
    out.scheme = SchemeKind::Reference;
    Ok(out)
}

/// Sup distance on the coarse grid between the reference built from the full
/// fine path and the one built from every other fine node.
pub fn reference_gap<F: CoefficientField + ?Sized>(
    fine_path: &FbmPath,
    field: &F,
    y0: &[f64],
    coarse_n: usize,
) -> Result<f64> {
    let full = reference_solution(fine_path, field, y0, coarse_n)?;
    let half = reference_solution(&fine_path.restrict(2)?, field, y0, coarse_n)?;
    sup_distance(&full, &half)
}

/// Fails when changing the reference grid moves the measured error by
/// `SELF_CONSISTENCY_TOL` of the error itself or more.
pub fn check_self_consistency(gap: f64, scheme_error: f64) -> Result<()> {
    if gap.abs() < SELF_CONSISTENCY_TOL * scheme_error.abs() {
        Ok(())
    } else {
        Err(Error::SelfConsistency {
            gap,
            error: scheme_error,
        })
    }
}

/// Max Euclidean distance over common nodes.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.grid_n != b.grid_n || a.dim != b.dim || (a.horizon - b.horizon).abs() > 1e-12 * a.horizon {
        return Err(Error::Grid(format!(
            "trajectories on different grids ({} x {}, {} x {})",
            a.grid_n, a.dim, b.grid_n, b.dim
        )));
    }
    Ok((0..=a.grid_n)
        .map(|k| {
            a.at(k)
                .iter()
                .zip(b.at(k))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

/// Continuous-time modified Euler interpolation, evaluated on every node of
/// the fine path:
///
/// `y_t = y_{t_k} + b(y_{t_k})(t - t_k) + V(y_{t_k}) δB_{t_k t} + ½ Σ_j ∂V_j V_j(y_{t_k}) (t - t_k)^{2H}`
///
/// At coarse nodes it coincides with [`modified_euler`].
pub fn modified_euler_interpolation<F: CoefficientField + ?Sized>(
    path: &FbmPath,
    coarse_n: usize,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    let coarse = run_scheme(SchemeKind::Modified, path, coarse_n, field, y0)?;
    let (d, m) = (field.dim_state(), field.dim_noise());
    let factor = path.n / coarse_n;
    let mut ev = FieldEval::new(d, m);
    let mut values = Vec::with_capacity((path.n + 1) * d);
    for k in 0..coarse_n {
        let yk = coarse.at(k);
        ev.eval(field, yk, Order::Second);
        for a in 0..factor {
            let node = k * factor + a;
            let dt = path.time(node) - path.time(k * factor);
            let corr = 0.5 * pow2h(dt, path.hurst);
            for r in 0..d {
                let mut x = yk[r] + ev.b[r] * dt;
                for j in 0..m {
                    let db = path.values[j][node] - path.values[j][k * factor];
                    x += ev.v[r * m + j] * db + corr * ev.dvv_at(r, j, j);
                }
                values.push(x);
            }
        }
    }
    values.extend_from_slice(coarse.terminal());
    Ok(Trajectory {
        grid_n: path.n,
        horizon: path.horizon,
        dim: d,
        scheme: SchemeKind::Modified,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::generate_fbm;
    use crate::field::{ConstantField, GeometricField, RotationField};

    fn constant_field() -> ConstantField {
        ConstantField {
            d: 2,
            m: 2,
            matrix: vec![1.0, -0.5, 0.25, 2.0],
        }
    }

    #[test]
    fn additive_noise_is_exact_for_every_scheme() {
        let f = constant_field();
        let p = generate_fbm(0.4, 256, 1.0, 2, 5).unwrap();
        let y0 = [0.3, -0.2];
        for kind in SchemeKind::ALL {
            if kind == SchemeKind::Reference {
                continue;
            }
            let tr = run_scheme(kind, &p, 8, &f, &y0).unwrap();
            for k in 0..=8 {
                let (b1, b2) = (p.values[0][32 * k], p.values[1][32 * k]);
                let want = [y0[0] + b1 - 0.5 * b2, y0[1] + 0.25 * b1 + 2.0 * b2];
                for r in 0..2 {
                    assert!((tr.at(k)[r] - want[r]).abs() < 1e-13, "{kind}");
                }
            }
        }
        let r = reference_solution(&p, &f, &y0, 8).unwrap();
        assert!((r.terminal()[0] - (y0[0] + p.values[0][256] - 0.5 * p.values[1][256])).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_and_drift_is_constant() {
        let f = GeometricField::default();
        let inc = vec![0.0; 16];
        let tr = modified_euler(&inc, 1.0 / 16.0, 0.4, &f, &[2.0]).unwrap();
        // The correction is proportional to y and survives zero noise.
        assert!(tr.terminal()[0] > 2.0);
        let tr = classical_euler(&inc, 1.0 / 16.0, &f, &[2.0]).unwrap();
        assert!(tr.values.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn scalar_geometric_recursions() {
        let f = GeometricField::default();
        let p = generate_fbm(0.4, 64, 1.0, 1, 3).unwrap();
        let inc = p.increments();
        let h = p.step();
        let c = 0.5 * h.powf(0.8);
        let tr = modified_euler(&inc, h, 0.4, &f, &[1.0]).unwrap();
        let mut y = 1.0;
        for (k, x) in inc.iter().enumerate() {
            y *= 1.0 + x + c;
            assert!((tr.at(k + 1)[0] - y).abs() < 1e-13 * y.abs().max(1.0));
        }
        let x = 0.37;
        let t3 = third_order(&[x], 0.1, &f, &[1.0]).unwrap();
        assert!((t3.terminal()[0] - (1.0 + x + x * x / 2.0 + x * x * x / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn taylor_equals_wong_zakai_for_one_noise() {
        let f = GeometricField { sigma: 0.8 };
        let p = generate_fbm(0.4, 512, 1.0, 1, 11).unwrap();
        let a = run_scheme(SchemeKind::Taylor, &p, 16, &f, &[1.0]).unwrap();
        let b = run_scheme(SchemeKind::WongZakai, &p, 16, &f, &[1.0]).unwrap();
        assert!(sup_distance(&a, &b).unwrap() < 1e-13);
    }

    #[test]
    fn modified_minus_classical_on_one_step() {
        let f = RotationField::default();
        let y0 = [0.4, -0.7];
        let inc = [0.2, -0.1];
        let h = 0.25;
        let a = modified_euler(&inc, h, 0.4, &f, &y0).unwrap();
        let b = classical_euler(&inc, h, &f, &y0).unwrap();
        let dvv = crate::field::FieldExt::eval_dvv(&f, &y0);
        for r in 0..2 {
            let corr = 0.5 * h.powf(0.8) * (dvv[r * 4] + dvv[r * 4 + 3]);
            assert!((a.terminal()[r] - b.terminal()[r] - corr).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_matches_geometric_solution() {
        let f = GeometricField::default();
        let p = generate_fbm(0.4, 1 << 15, 0.25, 1, 21).unwrap();
        let r = reference_solution(&p, &f, &[1.0], 1 << 10).unwrap();
        for k in 0..=1024 {
            let exact = p.values[0][32 * k].exp();
            assert!((r.at(k)[0] - exact).abs() < 1e-4, "k={k}");
        }
    }

    #[test]
    fn reference_requires_refinement() {
        let f = GeometricField::default();
        let p = generate_fbm(0.4, 256, 1.0, 1, 1).unwrap();
        assert!(reference_solution(&p, &f, &[1.0], 16).is_err());
        assert!(reference_solution(&p, &f, &[1.0], 8).is_ok());
        assert!(reference_solution(&p, &f, &[1.0], 7).is_err());
    }

    #[test]
    fn self_consistency_gate() {
        assert!(check_self_consistency(0.009, 0.1).is_ok());
        assert!(matches!(check_self_consistency(0.02, 0.1), Err(Error::SelfConsistency { .. })));
    }

    #[test]
    fn interpolation_hits_coarse_nodes() {
        let f = RotationField::default();
        let p = generate_fbm(0.4, 256, 1.0, 2, 6).unwrap();
        let y0 = [0.1, 0.2];
        let fine = modified_euler_interpolation(&p, 16, &f, &y0).unwrap();
        let coarse = run_scheme(SchemeKind::Modified, &p, 16, &f, &y0).unwrap();
        assert_eq!(fine.grid_n, 256);
        let back = fine.restrict(16).unwrap();
        assert!(sup_distance(&back, &coarse).unwrap() < 1e-14);
        // Between nodes the interpolant moves with the path.
        assert!((fine.at(1)[0] - fine.at(0)[0]).abs() > 0.0);
    }

    #[test]
    fn scheme_tags_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.tag().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("euler".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn dimension_errors() {
        let f = RotationField::default();
        assert!(classical_euler(&[0.1, 0.2, 0.3], 0.1, &f, &[0.0, 0.0]).is_err());
        assert!(classical_euler(&[0.1, 0.2], 0.1, &f, &[0.0]).is_err());
        assert!(classical_euler(&[0.1, 0.2], 0.0, &f, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn deterministic_rerun() {
        let f = RotationField::default();
        let a = run_scheme(SchemeKind::Modified, &generate_fbm(0.4, 128, 1.0, 2, 9).unwrap(), 32, &f, &[0.0, 0.0]).unwrap();
        let b = run_scheme(SchemeKind::Modified, &generate_fbm(0.4, 128, 1.0, 2, 9).unwrap(), 32, &f, &[0.0, 0.0]).unwrap();
        assert_eq!(a, b);
    }
}
