//! Pipelines behind each subcommand.

use std::fs;

use anyhow::{anyhow, bail, Context, Result};
use rough_euler::analysis::harness::{clt_experiment, rate_experiment, CltConfig, RateConfig};
use rough_euler::analysis::stats::{rate_fit_with_reps, RateReport};
use rough_euler::constants::qp_sum;
use rough_euler::fbm::FbmGenerator;
use rough_euler::field::{builtin, CoefficientField};
use rough_euler::limit::WFactor;
use rough_euler::schemes::{reference_solution, run_scheme, sup_distance, SchemeKind};
use rough_euler::seed::{derive_seed, tags};
use serde_json::json;

use crate::config::{Command, ExperimentConfig};
use crate::output::{num, Csv, Output};
use crate::suite;

/// `passed == false` marks a scientific-threshold failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub passed: bool,
}

const OK: Outcome = Outcome { passed: true };

pub fn field(name: &str) -> Result<Box<dyn CoefficientField>> {
    builtin(name).ok_or_else(|| anyhow!("unknown field {name:?}"))
}

pub fn run(command: Command, cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    match command {
        Command::Fbm => fbm(cfg, out),
        Command::Constants => constants(cfg, out),
        Command::Simulate => simulate(cfg, out),
        Command::Rate => rate(cfg, out),
        Command::Clt => clt(cfg, out),
        Command::Check => check(cfg, out),
    }
}

fn fbm(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let s = &cfg.fbm;
    let gen = FbmGenerator::new(s.hurst, s.n, s.horizon)?;
    for p in 0..s.paths {
        let path = gen.generate(s.components, derive_seed(cfg.seed, &[tags::PATH, p as u64]));
        let mut buf = Vec::new();
        path.write_csv(&mut buf)?;
        let name = if s.paths == 1 {
            "fbm.csv".to_string()
        } else {
            format!("fbm_{p:05}.csv")
        };
        out.write(&name, &buf)?;
    }
    out.write_json(
        "summary.json",
        &json!({
            "command": "fbm",
            "hurst": s.hurst,
            "horizon": s.horizon,
            "n": s.n,
            "components": s.components,
            "paths": s.paths,
            "method": format!("{:?}", gen.method()),
        }),
    )?;
    Ok(OK)
}

fn constants(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let s = &cfg.constants;
    let mut terms = Csv::new(&["H", "k", "Q", "P"]);
    let mut sums = Csv::new(&["H", "Q", "P", "tail_estimate", "q_minus_p"]);
    let mut summary = Vec::new();
    for &h in &s.hurst {
        let t = qp_sum(h, s.k_max, s.quad_n)?;
        for k in t.lags() {
            terms.row(&[num(h), k.to_string(), num(t.q(k)), num(t.p(k))]);
        }
        sums.row(&[num(h), num(t.q_sum), num(t.p_sum), num(t.tail_estimate), num(t.q_sum - t.p_sum)]);
        summary.push(json!({
            "H": h, "Q": t.q_sum, "P": t.p_sum, "tail_estimate": t.tail_estimate,
            "q_greater_than_p": t.q_sum > t.p_sum,
        }));
    }
    out.write("constants_terms.csv", &terms.into_bytes())?;
    out.write("constants.csv", &sums.into_bytes())?;
    out.write_json(
        "summary.json",
        &json!({ "command": "constants", "k_max": s.k_max, "quad_n": s.quad_n, "tables": summary }),
    )?;
    Ok(OK)
}

fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let s = &cfg.simulate;
    let f = field(&s.field)?;
    let y0 = if s.y0.is_empty() { vec![0.0; f.dim_state()] } else { s.y0.clone() };
    let gen = FbmGenerator::new(s.hurst, s.n * s.refinement, s.horizon)?;
    let path = gen.generate(f.dim_noise(), derive_seed(cfg.seed, &[tags::PATH, 0]));
    let reference = reference_solution(&path, f.as_ref(), &y0, s.n)?;

    let mut buf = Vec::new();
    path.restrict(s.refinement)?.write_csv(&mut buf)?;
    out.write("fbm.csv", &buf)?;
    buf.clear();
    reference.write_csv(&mut buf)?;
    out.write("trajectory_reference.csv", &buf)?;

    let mut errors = serde_json::Map::new();
    for kind in cfg.simulate_schemes() {
        if kind == SchemeKind::Reference {
            continue;
        }
        let traj = run_scheme(kind, &path, s.n, f.as_ref(), &y0)?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        out.write(&format!("trajectory_{}.csv", kind.tag()), &buf)?;
        errors.insert(kind.tag().into(), json!(sup_distance(&traj, &reference)?));
    }
    out.write_json(
        "summary.json",
        &json!({
            "command": "simulate", "field": s.field, "hurst": s.hurst, "horizon": s.horizon,
            "n": s.n, "refinement": s.refinement, "sup_error_vs_reference": errors,
        }),
    )?;
    Ok(OK)
}

/// Rows `(scheme, n, mean_err, stderr, reps)` of a `rate.csv`-shaped file.
fn read_rate_fixture(text: &str) -> Result<Vec<(String, usize, f64, f64, usize)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty fixture")?.split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| anyhow!("fixture lacks a {name} column"))
    };
    let (cs, cn, ce) = (col("scheme")?, col("n")?, col("mean_err")?);
    let cse = col("stderr").ok();
    let cr = col("reps").ok();
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |c: usize| f.get(c).copied().ok_or_else(|| anyhow!("fixture row {} is short", i + 2));
            Ok((
                get(cs)?.to_string(),
                get(cn)?.parse()?,
                get(ce)?.parse()?,
                cse.map(|c| get(c).and_then(|x| Ok(x.parse::<f64>()?))).transpose()?.unwrap_or(0.0),
                cr.map(|c| get(c).and_then(|x| Ok(x.parse::<usize>()?))).transpose()?.unwrap_or(0),
            ))
        })
        .collect()
}

fn write_rate_fits(out: &mut Output, reports: &[(String, RateReport)]) -> Result<()> {
    let mut fits = Csv::new(&["scheme", "slope", "slope_stderr", "intercept", "reps"]);
    for (s, r) in reports {
        fits.row(&[s.clone(), num(r.fitted_slope), num(r.slope_stderr), num(r.intercept), r.mc_reps.to_string()]);
    }
    out.write("rate_fit.csv", &fits.into_bytes())
}

fn rate(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let s = &cfg.rate;
    if let Some(fixture) = &s.fixture {
        let text = fs::read_to_string(fixture)
            .with_context(|| format!("cannot read fixture {}", fixture.display()))?;
        let rows = read_rate_fixture(&text)?;
        let mut schemes: Vec<String> = Vec::new();
        for r in &rows {
            if !schemes.contains(&r.0) {
                schemes.push(r.0.clone());
            }
        }
        let mut reports = Vec::new();
        for name in schemes {
            let mine: Vec<_> = rows.iter().filter(|r| r.0 == name).collect();
            let ns: Vec<usize> = mine.iter().map(|r| r.1).collect();
            let errs: Vec<f64> = mine.iter().map(|r| r.2).collect();
            let reps = mine.iter().map(|r| r.4).min().unwrap_or(0);
            reports.push((name, rate_fit_with_reps(&ns, &errs, reps)?));
        }
        write_rate_fits(out, &reports)?;
        out.write_json(
            "summary.json",
            &json!({
                "command": "rate", "fixture": fixture,
                "fits": reports.iter().map(|(s, r)| json!({"scheme": s, "slope": r.fitted_slope, "slope_stderr": r.slope_stderr})).collect::<Vec<_>>(),
            }),
        )?;
        return Ok(OK);
    }

    let f = field(&s.field)?;
    let rc = RateConfig {
        hurst: s.hurst,
        horizon: s.horizon,
        ns: s.ns.clone(),
        reps: s.reps,
        refinement: s.refinement,
        schemes: cfg.rate_schemes(),
        seed: cfg.seed,
    };
    let exp = rate_experiment(&rc, f.as_ref(), &s.y0)?;
    let mut table = Csv::new(&["scheme", "n", "H", "mean_err", "stderr", "reps"]);
    for c in &exp.cells {
        table.row(&[c.scheme.tag().into(), c.n.to_string(), num(s.hurst), num(c.mean_err), num(c.stderr), c.reps.to_string()]);
    }
    out.write("rate.csv", &table.into_bytes())?;
    let mut refs = Csv::new(&["scheme", "n", "mean_err_half_reference", "relative_shift"]);
    for c in &exp.cells {
        refs.row(&[c.scheme.tag().into(), c.n.to_string(), num(c.mean_err_half_reference), num(c.reference_shift())]);
    }
    out.write("rate_reference.csv", &refs.into_bytes())?;
    let reports: Vec<(String, RateReport)> =
        exp.reports.iter().map(|(k, r)| (k.tag().to_string(), r.clone())).collect();
    write_rate_fits(out, &reports)?;
    let consistency: Vec<_> = rc
        .schemes
        .iter()
        .map(|&k| json!({"scheme": k.tag(), "reference_consistent": exp.check_reference(k).is_ok()}))
        .collect();
    out.write_json(
        "summary.json",
        &json!({
            "command": "rate", "field": s.field, "hurst": s.hurst, "horizon": s.horizon,
            "reps": s.reps, "refinement": s.refinement,
            "fits": reports.iter().map(|(s, r)| json!({"scheme": s, "slope": r.fitted_slope, "slope_stderr": r.slope_stderr})).collect::<Vec<_>>(),
            "reference_gaps": exp.reference_gaps,
            "reference_checks": consistency,
        }),
    )?;
    Ok(OK)
}

fn clt(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let s = &cfg.clt;
    let f = field(&s.field)?;
    let mut table = qp_sum(s.hurst, s.k_max, s.quad_n)?;
    if s.swap_qp {
        table = table.swapped();
    }
    let w = WFactor::new(&table, s.horizon, f.dim_noise())?;
    let cc = CltConfig {
        hurst: s.hurst,
        horizon: s.horizon,
        n: s.n,
        reps: s.reps,
        refinement: s.refinement,
        nu: s.nu,
        seed: cfg.seed,
    };
    let rep = clt_experiment(&cc, f.as_ref(), &s.y0, &w)?;
    let d = rep.dim;
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=d).map(|k| format!("error_{k}")));
    header.extend((1..=d).map(|k| format!("limit_{k}")));
    let mut samples = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for r in 0..rep.reps {
        let mut row = vec![r.to_string()];
        row.extend(rep.errors[r * d..(r + 1) * d].iter().map(|&x| num(x)));
        row.extend(rep.limits[r * d..(r + 1) * d].iter().map(|&x| num(x)));
        samples.row(&row);
    }
    out.write("clt_samples.csv", &samples.into_bytes())?;
    let mut stats = Csv::new(&["coordinate", "mean_error", "mean_limit", "var_error", "var_limit", "variance_gap", "ks"]);
    for (k, c) in rep.coordinates.iter().enumerate() {
        stats.row(&[(k + 1).to_string(), num(c.mean_error), num(c.mean_limit), num(c.var_error), num(c.var_limit), num(c.variance_gap()), num(c.ks)]);
    }
    out.write("clt.csv", &stats.into_bytes())?;
    out.write_json(
        "summary.json",
        &json!({
            "command": "clt", "field": s.field, "hurst": s.hurst, "horizon": s.horizon,
            "n": s.n, "nu": s.nu, "reps": s.reps, "Q": table.q_sum, "P": table.p_sum,
            "swap_qp": s.swap_qp, "max_variance_gap": rep.max_variance_gap(), "max_ks": rep.max_ks(),
        }),
    )?;
    Ok(OK)
}

fn check(cfg: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let opts = suite::SuiteOptions::from_config(cfg);
    let results = suite::run_suite(&opts, out)?;
    suite::print_table(&results);
    if results.is_empty() {
        bail!("no criteria selected");
    }
    Ok(Outcome {
        passed: results.iter().all(|r| r.passed),
    })
}
