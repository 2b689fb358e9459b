//! Command-line front end: argument parsing, subcommands and table output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ncpiv_core::fredholm::FredholmError;
use ncpiv_core::kernels::KernelError;
use ncpiv_core::{Closure, MatrixError, MopError, PainleveError};

pub use commands::Report;
pub use config::{FamilyArg, Format, RunConfig};
pub use output::{Cell, Table};

pub const THREADS_ENV: &str = "NCPIV_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mop(#[from] MopError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Fredholm(#[from] FredholmError),
    #[error(transparent)]
    Painleve(#[from] PainleveError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClosureArg {
    Printed,
    LaxCompatible,
}

impl From<ClosureArg> for Closure {
    fn from(c: ClosureArg) -> Self {
        match c {
            ClosureArg::Printed => Closure::Printed,
            ClosureArg::LaxCompatible => Closure::LaxCompatible,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ncpiv", version, about = "Matrix Hermite kernels, Fredholm determinants and Painleve IV checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks of the polynomial family and its kernel representations.
    Verify(RunConfig),
    /// Fredholm determinants and log-derivatives over an s grid.
    FredholmScan(RunConfig),
    /// Integrate the coupled matrix system and report residuals.
    Painleve {
        #[command(flatten)]
        config: RunConfig,
        /// JSON initial data; seeded random data when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "printed")]
        closure: ClosureArg,
    },
    /// Edge scaling limit against the Airy kernel.
    Airy {
        #[command(flatten)]
        config: RunConfig,
        /// Comma-separated degrees from {8,16,32,64}.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n_list: Vec<usize>,
    },
}

impl Command {
    pub fn config(&self) -> &RunConfig {
        match self {
            Command::Verify(c) | Command::FredholmScan(c) => c,
            Command::Painleve { config, .. } | Command::Airy { config, .. } => config,
        }
    }
}

/// Runs a parsed command and returns the report without writing it.
pub fn execute(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Verify(c) => commands::verify(c),
        Command::FredholmScan(c) => commands::fredholm_scan(c),
        Command::Painleve { config, init, closure } => {
            let data = match init {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                    Some(commands::InitData::parse(&text)?)
                }
                None => None,
            };
            commands::painleve(config, data, (*closure).into())
        }
        Command::Airy { config, n_list } => commands::airy(config, n_list),
    }
}

/// Thread cap from `NCPIV_THREADS`; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{THREADS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Full run: thread setup, execution, output. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<bool, CliError> {
        if let Some(n) = thread_cap()? {
            // a pool that already exists keeps its size
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let cfg = cli.command.config();
        let report = execute(&cli.command)?;
        let text = report.table.render(cfg.format);
        match &cfg.out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(report.passed)
    })();
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("one or more checks failed");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
