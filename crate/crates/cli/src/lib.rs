//! Command-line front end: sweeps, circulator maps, fits and material
//! tensors written as CSV tables and JSON reports.
//!
//! Exit codes: 0 success, 2 usage or config, 3 data parse, 4 numerical
//! failure.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};
pub use output::Format;

#[derive(Debug, Parser)]
#[command(name = "ferrocirc", version, about = "Non-Hermitian circulator-cavity model sweeps, fits and tensors")]
pub struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it. Default: all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Table format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-mode circulator eigenfrequencies over the B grid.
    SweepInternal,
    /// |S31| map, eigenmode sweep and reduced two-cavity model over B.
    SweepHybrid,
    /// Three-port isolation map over the splitting grid and working point.
    Circulator,
    /// Per-trace Lorentzian fits and a global parameter fit.
    Fit(FitArgs),
    /// Permeability tensors for external field solvers.
    FerriteTensor,
    /// Boltzmann anisotropy profile and its sech fit.
    AnisotropyProfile,
    /// Noisy S31 traces from the configured model.
    Synthesize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trace file; overrides the config `data_file`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Pins a model parameter, e.g. `--fixed kappa_3_mhz=730`. Repeatable.
    #[arg(long, value_name = "KEY=VALUE")]
    pub fixed: Vec<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SweepInternal => "sweep-internal",
            Command::SweepHybrid => "sweep-hybrid",
            Command::Circulator => "circulator",
            Command::Fit(_) => "fit",
            Command::FerriteTensor => "ferrite-tensor",
            Command::AnisotropyProfile => "anisotropy-profile",
            Command::Synthesize => "synthesize",
        }
    }
}

/// Parses `args` (program name first) and runs the command. Help and
/// version requests print and succeed.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    run(cli)
}

pub fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == Some(0) {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    let mut resolved = config::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        resolved.run.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = commands::Context { resolved, out: cli.out.clone(), format: cli.format };
    pool.install(|| commands::dispatch(&ctx, &cli.command))
}
