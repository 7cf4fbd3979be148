//! Command-line front end for the `lmreg` solvers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod setup;
pub mod tracefile;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_compare, cmd_reconstruct, cmd_solve, cmd_verify, Outcome};
pub use config::{Mode, RunConfig};
pub use error::{exit, CliError};
pub use tracefile::{TraceFile, TraceRow};

#[derive(Debug, Parser)]
#[command(name = "lmreg", version, about = "Levenberg–Marquardt regularization runs, checks and comparisons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an exact, noisy or Landweber iteration and write its trace.
    Solve(CommonArgs),
    /// Scan a lattice for a starting point, then iterate.
    Reconstruct(CommonArgs),
    /// Run the invariant suite and print a pass/fail table.
    Verify(CommonArgs),
    /// Tabulate LM against Landweber.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_path`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for the lattice scan and constant estimation.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `noise_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a) | Command::Reconstruct(a) | Command::Verify(a) | Command::Compare(a) => a,
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output_path = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.noise_seed = Some(s);
    }
    Ok(cfg)
}

pub fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    let args = command.args();
    let cfg = load_config(args)?;
    let run = || match command {
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Reconstruct(_) => cmd_reconstruct(&cfg),
        Command::Verify(_) => cmd_verify(&cfg),
        Command::Compare(_) => cmd_compare(&cfg),
    };
    match args.threads {
        Some(0) => Err(CliError::ConfigInvalid("--threads: must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Io(e.to_string()))?;
            pool.install(run)
        }
        None => run(),
    }
}

/// Parses `argv`, runs the command and returns the exit code. Messages go
/// to stdout/stderr.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG_INVALID } else { exit::OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(out) => {
            print!("{}", out.summary);
            if !out.summary.ends_with('\n') {
                println!();
            }
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
