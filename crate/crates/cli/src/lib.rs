//! Scenario files, subcommands and artifact writers for the `cbrw` binary.

pub mod artifacts;
pub mod commands;
pub mod scenario;

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("missing {file}; run `cbrw {command}` first")]
    MissingPrerequisite { file: PathBuf, command: &'static str },

    #[error(transparent)]
    Core(#[from] cbrw_core::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for an inconclusive regime, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(cbrw_core::Error::Inconclusive { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cbrw", version, about = "Catalytic branching random walk laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve "auto" jump-law weights and write them back into the scenario.
    Calibrate(Common),
    /// Classify the regime and solve for the Malthusian parameter.
    SolveNu(Common),
    /// Simulate an ensemble and write population snapshots.
    Simulate(Common),
    /// Shell containment and direction checks of the front (needs solve-nu).
    Front(Common),
    /// Hit probability of a fixed target set via the integral equation.
    Volterra(Common),
    /// Export the limiting front surface (needs solve-nu).
    ShapeExport(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Monte Carlo paths; overrides `mc.n_paths` and `volterra.n_paths`.
    #[arg(long)]
    pub budget: Option<usize>,
}

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cbrw: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    let common = match &command {
        Command::Calibrate(c)
        | Command::SolveNu(c)
        | Command::Simulate(c)
        | Command::Front(c)
        | Command::Volterra(c)
        | Command::ShapeExport(c) => c.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Calibrate(c) => commands::calibrate(&c.scenario).map(|_| ()),
        Command::SolveNu(c) => commands::solve_nu(&commands::Context::new(&c)?).map(|_| ()),
        Command::Simulate(c) => commands::simulate(&commands::Context::new(&c)?),
        Command::Front(c) => commands::front(&commands::Context::new(&c)?).map(|_| ()),
        Command::Volterra(c) => commands::volterra(&commands::Context::new(&c)?).map(|_| ()),
        Command::ShapeExport(c) => commands::shape_export(&commands::Context::new(&c)?),
    })
}
