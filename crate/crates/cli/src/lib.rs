//! Experiment runner for `hjb-core`: reads a TOML configuration, runs one
//! pipeline and writes CSV tables and JSON artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Numerical(#[from] hjb_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hjb",
    version,
    about = "Semilinear HJB equations via regression Monte Carlo FBSDEs"
)]
pub struct Cli {
    /// TOML configuration; defaults apply to every omitted field.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `mc.seed`).
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Paths of the backward solve (overrides `mc.paths`).
    #[arg(long, global = true, value_name = "INT")]
    pub paths: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the regularizing constant over t and N.
    Regularity,
    /// Solve the backward equation and persist the estimate.
    Solve,
    /// Mild residual, identification and weighted-norm checks.
    Verify {
        /// Estimate written by `solve`; solved afresh when omitted.
        #[arg(long, value_name = "PATH")]
        estimate: Option<PathBuf>,
    },
    /// Fundamental-relation suite for random, feedback and adversarial controls.
    Control {
        #[arg(long, value_name = "PATH")]
        estimate: Option<PathBuf>,
    },
}

/// Configuration after applying command-line overrides.
pub fn resolve(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    if let Some(n) = cli.paths {
        cfg.mc.paths = n;
    }
    if let Some(d) = &cli.out {
        cfg.output.dir = d.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output.dir);
    Ok((cfg, dir))
}

/// Runs one command and returns whether its hard assertions held.
pub fn run(cli: &Cli) -> Result<bool, CliError> {
    let (cfg, dir) = resolve(cli)?;
    match &cli.command {
        Command::Regularity => commands::regularity(&cfg, &dir),
        Command::Solve => commands::solve(&cfg, &dir),
        Command::Verify { estimate } => commands::verify(&cfg, &dir, estimate.as_deref()),
        Command::Control { estimate } => commands::control(&cfg, &dir, estimate.as_deref()),
    }
}

/// Parses `args`, runs, and maps the outcome to the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("assertion failure: see the pass columns of the written reports");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
