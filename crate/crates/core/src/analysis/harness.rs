//! Monte Carlo harnesses.
//!
//! Replicate `r` draws everything from streams derived from
//! `(seed, tag, r)`, so results do not depend on thread count or
//! scheduling. Per-replicate outputs are collected in index order before
//! any reduction.

use rayon::prelude::*;

use crate::analysis::decomposition::error_decomposition;
use crate::analysis::stats::{ks_two_sample, rate_fit_with_reps, RateReport};
use crate::error::{Error, Result};
use crate::fbm::{pow2h, FbmGenerator, FbmPath};
use crate::field::CoefficientField;
use crate::jacobian::{jacobian_pair, jacobian_pair_averaged};
use crate::lift::{levy_area_process, lift_geometric, lift_window};
use crate::limit::{limit_process_u, sample_w_with, WFactor};
use crate::numeric::{mean_stderr, mean_var, median};
use crate::schemes::{
    check_self_consistency, modified_euler, run_scheme, sup_distance, third_order, SchemeKind,
    Trajectory,
};
use crate::seed::{derive_seed, tags};

fn check_power_of_two_ratio(what: &'static str, big: usize, small: usize) -> Result<usize> {
    if small == 0 || big % small != 0 {
        return Err(Error::Divisibility {
            what,
            n: big,
            factor: small,
        });
    }
    Ok(big / small)
}

fn initial_condition<F: CoefficientField + ?Sized>(field: &F, y0: &[f64]) -> Result<Vec<f64>> {
    if y0.is_empty() {
        return Ok(vec![0.0; field.dim_state()]);
    }
    if y0.len() != field.dim_state() {
        return Err(Error::Dimension(format!(
            "initial condition has {} entries, field state dimension is {}",
            y0.len(),
            field.dim_state()
        )));
    }
    Ok(y0.to_vec())
}

/// Third-order scheme on every node of `path`.
fn fine_reference<F: CoefficientField + ?Sized>(
    path: &FbmPath,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    let mut t = third_order(&path.increments(), path.step(), field, y0)?;
    t.scheme = SchemeKind::Reference;
    Ok(t)
}

/// Exact solution on every node when the field has one, otherwise the
/// third-order scheme.
fn truth_on_nodes<F: CoefficientField + ?Sized>(
    path: &FbmPath,
    field: &F,
    y0: &[f64],
) -> Result<Trajectory> {
    let m = path.components();
    let mut b = vec![0.0; m];
    let mut values = Vec::with_capacity((path.n + 1) * field.dim_state());
    for k in 0..=path.n {
        for j in 0..m {
            b[j] = path.values[j][k];
        }
        match field.exact_solution(y0, &b, path.time(k)) {
            Some(y) => values.extend(y),
            None => return fine_reference(path, field, y0),
        }
    }
    Ok(Trajectory {
        grid_n: path.n,
        horizon: path.horizon,
        dim: field.dim_state(),
        scheme: SchemeKind::Reference,
        values,
    })
}

// ---------------------------------------------------------------------------
// Strong rate

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub refinement: usize,
    pub schemes: Vec<SchemeKind>,
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            ns: (6..=12).map(|e| 1usize << e).collect(),
            reps: 1000,
            refinement: 32,
            schemes: vec![SchemeKind::Classical, SchemeKind::Modified],
            seed: 0,
        }
    }
}

/// One `(scheme, n)` cell of the rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCell {
    pub scheme: SchemeKind,
    pub n: usize,
    pub mean_err: f64,
    pub stderr: f64,
    pub reps: usize,
    /// Mean error against the reference built on half the fine grid.
    pub mean_err_half_reference: f64,
}

impl RateCell {
    /// Relative change of the measured error when the reference grid is halved.
    pub fn reference_shift(&self) -> f64 {
        (self.mean_err - self.mean_err_half_reference).abs() / self.mean_err
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateExperiment {
    pub config: RateConfig,
    pub cells: Vec<RateCell>,
    pub reports: Vec<(SchemeKind, RateReport)>,
    /// Mean sup distance between the full and half-grid references, per `n`.
    pub reference_gaps: Vec<(usize, f64)>,
}

impl RateExperiment {
    pub fn report(&self, scheme: SchemeKind) -> Option<&RateReport> {
        self.reports.iter().find(|(s, _)| *s == scheme).map(|(_, r)| r)
    }

    pub fn cell(&self, scheme: SchemeKind, n: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.scheme == scheme && c.n == n)
    }

    /// Fails on the first cell of `scheme` whose error moves by 10% or more
    /// when the reference grid is halved.
    pub fn check_reference(&self, scheme: SchemeKind) -> Result<()> {
        for c in self.cells.iter().filter(|c| c.scheme == scheme) {
            check_self_consistency(c.mean_err - c.mean_err_half_reference, c.mean_err)?;
        }
        Ok(())
    }
}

/// Mean sup-error of each scheme against the third-order reference at
/// `refinement × n` steps, for every `n`.
///
/// All grids are nested restrictions of one path per replicate at
/// `refinement × max(ns)` steps.
pub fn rate_experiment<F: CoefficientField + ?Sized>(
    cfg: &RateConfig,
    field: &F,
    y0: &[f64],
) -> Result<RateExperiment> {
    let y0 = initial_condition(field, y0)?;
    if cfg.ns.is_empty() || cfg.reps == 0 || cfg.schemes.is_empty() {
        return Err(Error::Empty("rate experiment needs grids, replicates and schemes"));
    }
    if cfg.refinement < 2 || cfg.refinement % 2 != 0 {
        return Err(Error::Domain(format!(
            "refinement must be even and at least 2, got {}",
            cfg.refinement
        )));
    }
    let n_max = *cfg.ns.iter().max().unwrap();
    for &n in &cfg.ns {
        check_power_of_two_ratio("rate grid", n_max, n)?;
    }
    let fine_n = n_max * cfg.refinement;
    let gen = FbmGenerator::new(cfg.hurst, fine_n, cfg.horizon)?;
    let m = field.dim_noise();
    let ns_count = cfg.ns.len();
    let s_count = cfg.schemes.len();

    // Per replicate: [n][scheme] -> (err, err_half), plus per-n reference gap.
    let per_rep: Vec<(Vec<(f64, f64)>, Vec<f64>)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(m, derive_seed(cfg.seed, &[tags::PATH, r]));
            let mut errs = Vec::with_capacity(ns_count * s_count);
            let mut gaps = Vec::with_capacity(ns_count);
            for &n in &cfg.ns {
                let fine = path.restrict(n_max / n)?;
                let reference = fine_reference(&fine, field, &y0)?.restrict(cfg.refinement)?;
                let half = fine_reference(&fine.restrict(2)?, field, &y0)?
                    .restrict(cfg.refinement / 2)?;
                gaps.push(sup_distance(&reference, &half)?);
                for &s in &cfg.schemes {
                    let traj = run_scheme(s, &fine, n, field, &y0)?;
                    errs.push((sup_distance(&traj, &reference)?, sup_distance(&traj, &half)?));
                }
            }
            Ok((errs, gaps))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(ns_count * s_count);
    for (a, &n) in cfg.ns.iter().enumerate() {
        for (b, &s) in cfg.schemes.iter().enumerate() {
            let idx = a * s_count + b;
            let e: Vec<f64> = per_rep.iter().map(|(v, _)| v[idx].0).collect();
            let e_half: Vec<f64> = per_rep.iter().map(|(v, _)| v[idx].1).collect();
            let (mean_err, stderr) = mean_stderr(&e);
            cells.push(RateCell {
                scheme: s,
                n,
                mean_err,
                stderr,
                reps: cfg.reps,
                mean_err_half_reference: mean_var(&e_half).0,
            });
        }
    }
    let reference_gaps = cfg
        .ns
        .iter()
        .enumerate()
        .map(|(a, &n)| {
            let g: Vec<f64> = per_rep.iter().map(|(_, g)| g[a]).collect();
            (n, mean_var(&g).0)
        })
        .collect();
    let mut reports = Vec::with_capacity(s_count);
    if ns_count >= 4 {
        for &s in &cfg.schemes {
            let errs: Vec<f64> = cfg
                .ns
                .iter()
                .map(|&n| cells.iter().find(|c| c.scheme == s && c.n == n).unwrap().mean_err)
                .collect();
            reports.push((s, rate_fit_with_reps(&cfg.ns, &errs, cfg.reps)?));
        }
    }
    Ok(RateExperiment {
        config: cfg.clone(),
        cells,
        reports,
        reference_gaps,
    })
}

// ---------------------------------------------------------------------------
// Residual decay

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub refinement: usize,
    pub seed: u64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            ns: vec![1 << 7, 1 << 9, 1 << 11],
            reps: 200,
            refinement: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub ns: Vec<usize>,
    pub reps: usize,
    /// Medians over replicates of `n^{2H-1/2} sup |·|`.
    pub median_epsilon: Vec<f64>,
    pub median_hat: Vec<f64>,
    pub median_tilde: Vec<f64>,
}

impl ResidualReport {
    pub fn tilde_strictly_decreasing(&self) -> bool {
        self.median_tilde.windows(2).all(|w| w[1] < w[0])
    }
}

/// Medians of the scaled sup norms of `ε`, `ε̂`, `ε̃` for the modified Euler
/// scheme against the third-order reference.
pub fn residual_experiment<F: CoefficientField + ?Sized>(
    cfg: &ResidualConfig,
    field: &F,
    y0: &[f64],
) -> Result<ResidualReport> {
    let y0 = initial_condition(field, y0)?;
    if cfg.ns.is_empty() || cfg.reps == 0 {
        return Err(Error::Empty("residual experiment needs grids and replicates"));
    }
    let n_max = *cfg.ns.iter().max().unwrap();
    for &n in &cfg.ns {
        check_power_of_two_ratio("residual grid", n_max, n)?;
    }
    let gen = FbmGenerator::new(cfg.hurst, n_max * cfg.refinement, cfg.horizon)?;
    let m = field.dim_noise();

    let per_rep: Vec<Vec<[f64; 3]>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(m, derive_seed(cfg.seed, &[tags::PATH, r]));
            cfg.ns
                .iter()
                .map(|&n| {
                    let fine = path.restrict(n_max / n)?;
                    let y = fine_reference(&fine, field, &y0)?.restrict(cfg.refinement)?;
                    let coarse = fine.restrict(cfg.refinement)?;
                    let (inc, h) = (coarse.increments(), coarse.step());
                    let yn = modified_euler(&inc, h, cfg.hurst, field, &y0)?;
                    let jac = jacobian_pair(&y, &inc, h, cfg.hurst, field)?;
                    let jac_n = jacobian_pair_averaged(&y, &yn, &inc, h, cfg.hurst, field)?;
                    let f = levy_area_process(&lift_geometric(&fine, n)?);
                    let dec = error_decomposition(&y, &yn, &jac_n, &jac, &f, field)?;
                    Ok([dec.scaled_sup_epsilon(), dec.scaled_sup_hat(), dec.scaled_sup_tilde()])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let med = |a: usize, c: usize| median(&per_rep.iter().map(|v| v[a][c]).collect::<Vec<_>>());
    Ok(ResidualReport {
        ns: cfg.ns.clone(),
        reps: cfg.reps,
        median_epsilon: (0..cfg.ns.len()).map(|a| med(a, 0)).collect(),
        median_hat: (0..cfg.ns.len()).map(|a| med(a, 1)).collect(),
        median_tilde: (0..cfg.ns.len()).map(|a| med(a, 2)).collect(),
    })
}

// ---------------------------------------------------------------------------
// Error CLT

#[derive(Debug, Clone, PartialEq)]
pub struct CltConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub reps: usize,
    /// Fine steps per coarse step for reference trajectories.
    pub refinement: usize,
    /// Grid of the Wiener integral in `U`.
    pub nu: usize,
    pub seed: u64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            hurst: 0.45,
            horizon: 1.0,
            n: 1 << 10,
            reps: 2000,
            refinement: 32,
            nu: 1 << 10,
            seed: 0,
        }
    }
}

/// Comparison of one coordinate of the two sample sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateComparison {
    pub mean_error: f64,
    pub mean_limit: f64,
    pub var_error: f64,
    pub var_limit: f64,
    pub ks: f64,
}

impl CoordinateComparison {
    /// `|Var A - Var B| / Var B`.
    pub fn variance_gap(&self) -> f64 {
        (self.var_error - self.var_limit).abs() / self.var_limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub dim: usize,
    pub reps: usize,
    /// `[reps × d]`, renormalized errors `n^{2H-1/2}(y_T - yⁿ_T)`.
    pub errors: Vec<f64>,
    /// `[reps × d]`, draws of `U_T`.
    pub limits: Vec<f64>,
    pub coordinates: Vec<CoordinateComparison>,
}

impl CltReport {
    pub fn max_variance_gap(&self) -> f64 {
        self.coordinates.iter().map(|c| c.variance_gap()).fold(0.0, f64::max)
    }

    pub fn max_ks(&self) -> f64 {
        self.coordinates.iter().map(|c| c.ks).fold(0.0, f64::max)
    }

    pub fn within(&self, variance_tol: f64, ks_tol: f64) -> bool {
        self.max_variance_gap() <= variance_tol && self.max_ks() <= ks_tol
    }
}

/// Sample set A: `n^{2H-1/2}(y_T - yⁿ_T)` for the modified Euler scheme.
pub fn clt_error_samples<F: CoefficientField + ?Sized>(
    cfg: &CltConfig,
    field: &F,
    y0: &[f64],
) -> Result<Vec<f64>> {
    let y0 = initial_condition(field, y0)?;
    let (d, m) = (field.dim_state(), field.dim_noise());
    let exact = field
        .exact_solution(&y0, &vec![0.0; m], 0.0)
        .is_some();
    let fine_n = if exact { cfg.n } else { cfg.n * cfg.refinement };
    let gen = FbmGenerator::new(cfg.hurst, fine_n, cfg.horizon)?;
    let scale = (cfg.n as f64).powf(2.0 * cfg.hurst - 0.5);
    let rows: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(m, derive_seed(cfg.seed, &[tags::PATH, r]));
            let y_t = if exact {
                let b_t: Vec<f64> = path.values.iter().map(|c| c[path.n]).collect();
                field.exact_solution(&y0, &b_t, cfg.horizon).unwrap()
            } else {
                fine_reference(&path, field, &y0)?.terminal().to_vec()
            };
            let coarse = path.restrict(fine_n / cfg.n)?;
            let yn = modified_euler(&coarse.increments(), coarse.step(), cfg.hurst, field, &y0)?;
            Ok((0..d).map(|k| scale * (y_t[k] - yn.terminal()[k])).collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Sample set B: draws of `U_T` with `W` built from `factor`.
///
/// The trajectory and its Jacobian are computed on `refinement × ν` steps
/// and restricted to the `ν` nodes of the Wiener integral.
pub fn clt_limit_samples<F: CoefficientField + ?Sized>(
    cfg: &CltConfig,
    field: &F,
    y0: &[f64],
    factor: &WFactor,
) -> Result<Vec<f64>> {
    let y0 = initial_condition(field, y0)?;
    let m = field.dim_noise();
    if factor.dim_m != m {
        return Err(Error::Dimension(format!(
            "W has {} components per side, field has {m} noises",
            factor.dim_m
        )));
    }
    let fine_n = cfg.nu * cfg.refinement;
    let gen = FbmGenerator::new(cfg.hurst, fine_n, cfg.horizon)?;
    let rows: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(m, derive_seed(cfg.seed, &[tags::LIMIT_PATH, r]));
            let y_fine = truth_on_nodes(&path, field, &y0)?;
            let jac = jacobian_pair(&y_fine, &path.increments(), path.step(), cfg.hurst, field)?
                .restrict(cfg.refinement)?;
            let y = y_fine.restrict(cfg.refinement)?;
            let w_seed = derive_seed(cfg.seed, &[tags::LIMIT_W, r]);
            let w = sample_w_with(factor, cfg.horizon, cfg.nu, w_seed);
            let u = limit_process_u(&y, &jac, &w, field, w_seed)?;
            Ok(u.terminal().to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Per-coordinate moments and KS statistic of two `[reps × d]` sample sets.
pub fn compare_samples(a: &[f64], b: &[f64], d: usize) -> Result<Vec<CoordinateComparison>> {
    (0..d)
        .map(|k| {
            let xs: Vec<f64> = a.iter().skip(k).step_by(d).copied().collect();
            let ys: Vec<f64> = b.iter().skip(k).step_by(d).copied().collect();
            let (ma, va) = mean_var(&xs);
            let (mb, vb) = mean_var(&ys);
            Ok(CoordinateComparison {
                mean_error: ma,
                mean_limit: mb,
                var_error: va,
                var_limit: vb,
                ks: ks_two_sample(&xs, &ys)?,
            })
        })
        .collect()
}

/// Both pipelines and their comparison.
pub fn clt_experiment<F: CoefficientField + ?Sized>(
    cfg: &CltConfig,
    field: &F,
    y0: &[f64],
    factor: &WFactor,
) -> Result<CltReport> {
    let errors = clt_error_samples(cfg, field, y0)?;
    let limits = clt_limit_samples(cfg, field, y0, factor)?;
    let d = field.dim_state();
    let coordinates = compare_samples(&errors, &limits, d)?;
    Ok(CltReport {
        dim: d,
        reps: cfg.reps,
        errors,
        limits,
        coordinates,
    })
}

// ---------------------------------------------------------------------------
// Lévy-area oracles

/// Mean of `x` and of the refinement-extrapolated `(r x - x_half)/(r - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolated {
    pub raw: f64,
    pub raw_stderr: f64,
    pub value: f64,
    pub stderr: f64,
}

fn extrapolate(fine: &[f64], coarse: &[f64], ratio: f64) -> Extrapolated {
    let z: Vec<f64> = fine
        .iter()
        .zip(coarse)
        .map(|(f, c)| (ratio * f - c) / (ratio - 1.0))
        .collect();
    let (raw, raw_stderr) = mean_stderr(fine);
    let (value, stderr) = mean_stderr(&z);
    Extrapolated {
        raw,
        raw_stderr,
        value,
        stderr,
    }
}

/// Error ratio of the piecewise-linear lift between refinements `ρ/2` and `ρ`.
pub fn refinement_ratio(hurst: f64) -> f64 {
    2f64.powf(4.0 * hurst - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FVarianceConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub reps: usize,
    pub refinement: usize,
    pub seed: u64,
}

impl Default for FVarianceConfig {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            n: 1 << 10,
            reps: 10_000,
            refinement: 32,
            seed: 0,
        }
    }
}

/// Second moment of `n^{2H-1/2} F^{12}_T`, raw at refinement `ρ` and
/// extrapolated from `ρ/2` and `ρ`. Its limit is `Q T^{4H}`.
pub fn f_variance_experiment(cfg: &FVarianceConfig) -> Result<Extrapolated> {
    if cfg.refinement < 2 || cfg.refinement % 2 != 0 {
        return Err(Error::Domain("refinement must be even".into()));
    }
    let gen = FbmGenerator::new(cfg.hurst, cfg.n * cfg.refinement, cfg.horizon)?;
    let scale = (cfg.n as f64).powf(2.0 * cfg.hurst - 0.5);
    let pairs: Vec<(f64, f64)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(2, derive_seed(cfg.seed, &[tags::ORACLE, r]));
            let total = |p: &FbmPath| -> Result<f64> {
                let f = levy_area_process(&lift_geometric(p, cfg.n)?);
                Ok(scale * f.entry(cfg.n, 0, 1))
            };
            let fine = total(&path)?;
            let coarse = total(&path.restrict(2)?)?;
            Ok((fine * fine, coarse * coarse))
        })
        .collect::<Result<_>>()?;
    let (fine, coarse): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(extrapolate(&fine, &coarse, refinement_ratio(cfg.hurst)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftCovarianceConfig {
    pub hurst: f64,
    pub lags: Vec<usize>,
    pub reps: usize,
    /// Fine steps per unit window.
    pub refinement: usize,
    pub seed: u64,
}

impl Default for LiftCovarianceConfig {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            lags: vec![0, 1, 2],
            reps: 100_000,
            refinement: 256,
            seed: 0,
        }
    }
}

/// Monte Carlo estimates of `E[𝔹^{12}_{0,1} 𝔹^{12}_{k,k+1}]` and
/// `E[𝔹^{12}_{0,1} 𝔹^{21}_{k,k+1}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagEstimate {
    pub k: usize,
    pub q: Extrapolated,
    pub p: Extrapolated,
}

pub fn lift_covariance_oracle(cfg: &LiftCovarianceConfig) -> Result<Vec<LagEstimate>> {
    if cfg.lags.is_empty() || cfg.reps == 0 {
        return Err(Error::Empty("lift oracle needs lags and replicates"));
    }
    if cfg.refinement < 2 || cfg.refinement % 2 != 0 {
        return Err(Error::Domain("refinement must be even".into()));
    }
    let windows = cfg.lags.iter().max().unwrap() + 1;
    let rho = cfg.refinement;
    let gen = FbmGenerator::new(cfg.hurst, windows * rho, windows as f64)?;
    let lags = &cfg.lags;
    // Per replicate, per lag: (q_fine, q_coarse, p_fine, p_coarse).
    let rows: Vec<Vec<[f64; 4]>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = gen.generate(2, derive_seed(cfg.seed, &[tags::ORACLE, r]));
            let half = path.restrict(2)?;
            let area = |p: &FbmPath, per: usize, k: usize| lift_window(p, k * per, (k + 1) * per);
            lags.iter()
                .map(|&k| {
                    let (_, a0) = area(&path, rho, 0)?;
                    let (_, ak) = area(&path, rho, k)?;
                    let (_, h0) = area(&half, rho / 2, 0)?;
                    let (_, hk) = area(&half, rho / 2, k)?;
                    Ok([a0[1] * ak[1], h0[1] * hk[1], a0[1] * ak[2], h0[1] * hk[2]])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let ratio = refinement_ratio(cfg.hurst);
    Ok(lags
        .iter()
        .enumerate()
        .map(|(a, &k)| {
            let col = |c: usize| rows.iter().map(|v| v[a][c]).collect::<Vec<_>>();
            LagEstimate {
                k,
                q: extrapolate(&col(0), &col(1), ratio),
                p: extrapolate(&col(2), &col(3), ratio),
            }
        })
        .collect())
}

/// `E[(𝔹^{ii}_{0,h})]` check helper: expected diagonal area `½ h^{2H}`.
pub fn expected_diagonal_area(h: f64, hurst: f64) -> f64 {
    0.5 * pow2h(h, hurst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::qp_riemann_sum;
    use crate::field::{GeometricField, RotationField};

    #[test]
    fn rate_experiment_is_deterministic_and_shaped() {
        let cfg = RateConfig {
            ns: vec![8, 16, 32, 64],
            reps: 6,
            seed: 3,
            ..RateConfig::default()
        };
        let f = RotationField::default();
        let a = rate_experiment(&cfg, &f, &[]).unwrap();
        let b = rate_experiment(&cfg, &f, &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 8);
        assert!(a.report(SchemeKind::Modified).is_some());
        assert!(a.cells.iter().all(|c| c.mean_err > 0.0 && c.stderr >= 0.0));
    }

    #[test]
    fn lift_oracle_matches_finite_resolution_sums() {
        // At finite refinement the lift covariance equals the corner sum
        // at that resolution, without any limiting argument.
        let cfg = LiftCovarianceConfig {
            reps: 4000,
            refinement: 16,
            lags: vec![0, 1],
            seed: 1,
            ..LiftCovarianceConfig::default()
        };
        let est = lift_covariance_oracle(&cfg).unwrap();
        for e in est {
            let (q, p) = qp_riemann_sum(e.k as i64, 0.4, 16);
            assert!((e.q.raw - q).abs() < 3.5 * e.q.raw_stderr, "k={} {} {q}", e.k, e.q.raw);
            assert!((e.p.raw - p).abs() < 3.5 * e.p.raw_stderr, "k={} {} {p}", e.k, e.p.raw);
        }
    }

    #[test]
    fn f_variance_matches_finite_resolution_sum() {
        // E[(n^{2H-1/2} F^{12}_1)²] = (1/n) Σ_{|k|<n} (n - |k|) S_ρ(k).
        let (n, rho) = (16usize, 8usize);
        let cfg = FVarianceConfig {
            n,
            refinement: rho,
            reps: 4000,
            seed: 2,
            ..FVarianceConfig::default()
        };
        let est = f_variance_experiment(&cfg).unwrap();
        let exact: f64 = (-(n as i64) + 1..n as i64)
            .map(|k| (n as f64 - k.abs() as f64) * qp_riemann_sum(k, 0.4, rho).0)
            .sum::<f64>()
            / n as f64;
        assert!((est.raw - exact).abs() < 3.5 * est.raw_stderr, "{} {exact}", est.raw);
    }

    #[test]
    fn degenerate_clt_for_additive_noise() {
        use crate::field::ConstantField;
        use crate::limit::WFactor;
        let f = ConstantField {
            d: 1,
            m: 1,
            matrix: vec![1.0],
        };
        let cfg = CltConfig {
            n: 32,
            nu: 32,
            reps: 20,
            refinement: 32,
            ..CltConfig::default()
        };
        let w = WFactor::from_constants(0.6, -0.05, 0.45, 1.0, 1).unwrap();
        let rep = clt_experiment(&cfg, &f, &[0.0], &w).unwrap();
        assert!(rep.errors.iter().all(|x| x.abs() < 1e-12));
        assert!(rep.limits.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn geometric_limit_is_terminal_value_times_w() {
        let f = GeometricField::default();
        let cfg = CltConfig {
            n: 16,
            nu: 16,
            reps: 3,
            refinement: 32,
            ..CltConfig::default()
        };
        let w = WFactor::from_constants(0.6, -0.05, 0.45, 1.0, 1).unwrap();
        let u = clt_limit_samples(&cfg, &f, &[1.0], &w).unwrap();
        assert_eq!(u.len(), 3);
        assert!(u.iter().all(|x| x.is_finite()));
    }
}
