//! The `lelong` command line: experiment configs in, CSV or JSON reports out.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use config::{parse_complex, ExperimentConfig, Format};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Exit status when a report was written but some quantity missed its tolerance.
pub const EXIT_PARTIAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "lelong", version, about = "Mass profiles and kernel bounds near a hyperbolic singularity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON). Built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: lelong-out]
    #[arg(long, global = true, env = "LELONG_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true, value_name = "REL")]
    pub tol: Option<f64>,
    /// Eigenvalue ratio λ, e.g. `i`, `-1+i` or `a,b`; sets μ = 1.
    #[arg(long, global = true, value_parser = parse_complex, allow_hyphen_values = true)]
    pub gamma_from_lambda: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Exponential-moment oracle against its closed form.
    Oracle {
        #[arg(long = "s0")]
        s0: Vec<f64>,
    },
    /// F(r) and G(r) on the radius grid for the configured current.
    Profile,
    /// Singular kernel against the main bound on the (s, y) grid.
    KernelBound {
        /// Also refine both grids once and report the drift.
        #[arg(long)]
        refine: bool,
    },
    /// Empirical constants of the Poisson-kernel regimes and the ρ solver.
    Regimes,
    /// Visibility and Poincaré-mass checks on one leaf.
    Recurrence,
    /// Every report with built-in currents and three eigenvalues.
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Oracle { .. } => "oracle",
            Command::Profile => "profile",
            Command::KernelBound { .. } => "kernel-bound",
            Command::Regimes => "regimes",
            Command::Recurrence => "recurrence",
            Command::All => "all",
        }
    }

    fn needs_seed(&self) -> bool {
        matches!(self, Command::Regimes | Command::Recurrence | Command::All)
    }
}

/// The config after command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(rel) = cli.tol {
        cfg.tolerance.rel = rel;
    }
    if let Some(lambda) = cli.gamma_from_lambda {
        cfg.singularity.mu = Complex64::new(1.0, 0.0);
        cfg.singularity.lambda = lambda;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = Some(dir.to_string_lossy().into_owned());
    }
    if let Some(f) = cli.format {
        cfg.output.format = Some(f);
    }
    cfg.validate()?;
    if cli.command.needs_seed() {
        cfg.require_seed(cli.command.name())?;
    }
    Ok(cfg)
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lelong: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = resolve_config(cli)?;
    let out = run::run(&cli.command, &cfg)?;
    let dir = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "lelong-out".into()));
    let format = cfg.output.format.unwrap_or(Format::Csv);
    let manifest = report::Manifest {
        tool: "lelong",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        format,
        partial: false,
        warnings: Vec::new(),
        files: Vec::new(),
    };
    out.write(&dir, format, manifest)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} tables to {}", out.tables.len(), dir.display());
    Ok(if out.partial { EXIT_PARTIAL } else { 0 })
}
