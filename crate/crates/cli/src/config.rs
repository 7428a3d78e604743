//! Experiment configuration: one TOML document with a section per command.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use rough_euler::field::BUILTIN_NAMES;
use rough_euler::schemes::SchemeKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fbm,
    Constants,
    Simulate,
    Rate,
    Clt,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fbm => "fbm",
            Command::Constants => "constants",
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Clt => "clt",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub fbm: FbmSection,
    pub constants: ConstantsSection,
    pub simulate: SimulateSection,
    pub rate: RateSection,
    pub clt: CltSection,
    pub check: CheckSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: None,
            fbm: FbmSection::default(),
            constants: ConstantsSection::default(),
            simulate: SimulateSection::default(),
            rate: RateSection::default(),
            clt: CltSection::default(),
            check: CheckSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbmSection {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub components: usize,
    pub paths: usize,
}

impl Default for FbmSection {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            n: 512,
            components: 2,
            paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub hurst: Vec<f64>,
    pub k_max: usize,
    pub quad_n: usize,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self {
            hurst: vec![0.3, 0.35, 0.4, 0.45],
            k_max: rough_euler::constants::DEFAULT_K_MAX,
            quad_n: rough_euler::constants::DEFAULT_QUAD_N,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub refinement: usize,
    pub schemes: Vec<String>,
    pub field: String,
    /// Empty means the origin.
    pub y0: Vec<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            n: 256,
            refinement: 32,
            schemes: ["classical", "modified", "taylor", "wong_zakai", "third_order"]
                .map(String::from)
                .to_vec(),
            field: "rotation".into(),
            y0: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSection {
    pub hurst: f64,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub refinement: usize,
    pub schemes: Vec<String>,
    pub field: String,
    pub y0: Vec<f64>,
    /// Precomputed `scheme,n,H,mean_err,stderr,reps` table to fit instead
    /// of simulating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
}

impl Default for RateSection {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            horizon: 1.0,
            ns: (6..=12).map(|e| 1usize << e).collect(),
            reps: 1000,
            refinement: 32,
            schemes: vec!["classical".into(), "modified".into()],
            field: "rotation".into(),
            y0: Vec::new(),
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltSection {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub nu: usize,
    pub reps: usize,
    pub refinement: usize,
    pub field: String,
    pub y0: Vec<f64>,
    pub k_max: usize,
    pub quad_n: usize,
    /// Exchange `Q` and `P` before building `W`.
    pub swap_qp: bool,
}

impl Default for CltSection {
    fn default() -> Self {
        Self {
            hurst: 0.45,
            horizon: crate::suite::CLT_HORIZON,
            n: 1 << 10,
            nu: 1 << 10,
            reps: 2000,
            refinement: 32,
            field: "geometric".into(),
            y0: vec![1.0],
            k_max: rough_euler::constants::DEFAULT_K_MAX,
            quad_n: rough_euler::constants::DEFAULT_QUAD_N,
            swap_qp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Multiplier on every replicate count; thresholds are unchanged.
    pub scale: f64,
    /// Run the error-CLT criterion with `Q` and `P` exchanged.
    pub swap_qp: bool,
    pub criteria: Vec<u8>,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            scale: 1.0,
            swap_qp: false,
            criteria: (1..=10).collect(),
        }
    }
}

const SCHEME_REGIME: (f64, f64, &str) = (
    1.0 / 3.0,
    0.5,
    "(1/3, 1/2), the range where the rough-path schemes are defined and the modified Euler scheme converges",
);
const CONSTANT_REGIME: (f64, f64, &str) = (
    0.25,
    0.5,
    "(1/4, 1/2), the range where Q and P are finite",
);

fn check_regime(section: &str, hurst: f64, regime: (f64, f64, &str)) -> Result<()> {
    ensure!(
        hurst > regime.0 && hurst < regime.1,
        "[{section}] hurst = {hurst} is outside {}",
        regime.2
    );
    Ok(())
}

fn check_field(section: &str, name: &str) -> Result<()> {
    ensure!(
        BUILTIN_NAMES.contains(&name),
        "[{section}] unknown field {name:?}; available: {}",
        BUILTIN_NAMES.join(", ")
    );
    Ok(())
}

fn check_schemes(section: &str, names: &[String]) -> Result<Vec<SchemeKind>> {
    ensure!(!names.is_empty(), "[{section}] schemes must not be empty");
    names
        .iter()
        .map(|s| SchemeKind::from_str(s).map_err(|e| anyhow::anyhow!("[{section}] {e}")))
        .collect()
}

fn check_positive(section: &str, key: &str, x: f64) -> Result<()> {
    ensure!(x > 0.0 && x.is_finite(), "[{section}] {key} must be positive, got {x}");
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("malformed configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fbm;
        check_regime("fbm", f.hurst, CONSTANT_REGIME)?;
        check_positive("fbm", "horizon", f.horizon)?;
        ensure!(f.n > 0 && f.components > 0 && f.paths > 0, "[fbm] n, components and paths must be positive");

        let c = &self.constants;
        ensure!(!c.hurst.is_empty(), "[constants] hurst list must not be empty");
        for &h in &c.hurst {
            check_regime("constants", h, CONSTANT_REGIME)?;
        }
        ensure!(c.k_max >= 4, "[constants] k_max must be at least 4");
        ensure!(c.quad_n >= 8, "[constants] quad_n must be at least 8");

        let s = &self.simulate;
        check_regime("simulate", s.hurst, SCHEME_REGIME)?;
        check_positive("simulate", "horizon", s.horizon)?;
        check_field("simulate", &s.field)?;
        check_schemes("simulate", &s.schemes)?;
        ensure!(s.n > 0, "[simulate] n must be positive");
        ensure!(
            s.refinement >= rough_euler::schemes::REFERENCE_MIN_REFINEMENT,
            "[simulate] refinement must be at least {}",
            rough_euler::schemes::REFERENCE_MIN_REFINEMENT
        );

        let r = &self.rate;
        check_regime("rate", r.hurst, SCHEME_REGIME)?;
        check_positive("rate", "horizon", r.horizon)?;
        check_field("rate", &r.field)?;
        check_schemes("rate", &r.schemes)?;
        ensure!(r.ns.len() >= 4, "[rate] ns needs at least 4 grid sizes for a slope fit");
        ensure!(r.ns.windows(2).all(|w| w[1] > w[0]), "[rate] ns must be increasing");
        ensure!(r.reps > 0, "[rate] reps must be positive");
        ensure!(
            r.refinement >= rough_euler::schemes::REFERENCE_MIN_REFINEMENT && r.refinement % 2 == 0,
            "[rate] refinement must be even and at least {}",
            rough_euler::schemes::REFERENCE_MIN_REFINEMENT
        );

        let k = &self.clt;
        check_regime("clt", k.hurst, SCHEME_REGIME)?;
        check_positive("clt", "horizon", k.horizon)?;
        check_field("clt", &k.field)?;
        ensure!(k.n > 0 && k.nu > 0 && k.reps > 1, "[clt] n, nu must be positive and reps at least 2");
        ensure!(k.refinement >= 1, "[clt] refinement must be positive");
        ensure!(k.k_max >= 4, "[clt] k_max must be at least 4");

        let ch = &self.check;
        check_positive("check", "scale", ch.scale)?;
        if let Some(bad) = ch.criteria.iter().find(|&&c| !(1..=10).contains(&c)) {
            bail!("[check] criterion {bad} does not exist; criteria are numbered 1 to 10");
        }
        if self.threads == Some(0) {
            bail!("threads must be positive");
        }
        Ok(())
    }

    pub fn rate_schemes(&self) -> Vec<SchemeKind> {
        check_schemes("rate", &self.rate.schemes).expect("validated")
    }

    pub fn simulate_schemes(&self) -> Vec<SchemeKind> {
        check_schemes("simulate", &self.simulate.schemes).expect("validated")
    }
}
