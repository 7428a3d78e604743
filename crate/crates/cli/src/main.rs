use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rough_euler_cli::{execute, Command, ExperimentConfig};

/// Experiments for Euler-type schemes driven by fractional Brownian motion.
///
/// Every flag can also be set through the environment variable named in
/// its help text. Flags override the configuration file.
#[derive(Debug, Parser)]
#[command(name = "rough-euler", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "ROUGH_EULER_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "ROUGH_EULER_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "ROUGH_EULER_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for replicate loops.
    #[arg(long, global = true, env = "ROUGH_EULER_THREADS")]
    threads: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Sample fractional Brownian motion paths.
    Fbm,
    /// Tabulate the constants Q and P.
    Constants,
    /// Run every scheme on one path against the reference solution.
    Simulate,
    /// Measure strong convergence rates.
    Rate,
    /// Compare renormalized errors with the limit process.
    Clt,
    /// Run the acceptance suite; exits with 2 if any criterion fails.
    Check,
}

impl Sub {
    fn command(&self) -> Command {
        match self {
            Sub::Fbm => Command::Fbm,
            Sub::Constants => Command::Constants,
            Sub::Simulate => Command::Simulate,
            Sub::Rate => Command::Rate,
            Sub::Clt => Command::Clt,
            Sub::Check => Command::Check,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("invalid configuration {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    let command = cli.command.command();
    if let Some(c) = cfg.command {
        if c != command {
            bail!("configuration is for `{}` but `{}` was requested", c.name(), command.name());
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.command = Some(command);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(true);
    }
    if let Some(k) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let command = cli.command.command();
    let (outcome, manifest) = execute(command, &cfg, &cfg.output_dir)?;
    eprintln!(
        "{}: {} files in {} ({:.1}s)",
        command.name(),
        manifest.files.len(),
        cfg.output_dir.display(),
        manifest.wall_clock_seconds
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
