//! Command-line experiment runner: `run`, `baseline`, `post` and `selftest`.

pub mod commands;
pub mod config;
pub mod selftest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] usfft::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("self-test failed: {0}")]
    SelftestFailed(String),
}

impl CliError {
    /// 1 for validation, 2 for runtime, 3 for a failed self-test.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
            CliError::SelftestFailed(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "usfft", version, about = "Uniform sparse FFT for parametric PDEs")]
pub struct Cli {
    /// Worker threads (default: all logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect frequencies and coefficients for a configured model and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `detection.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Approximate on a standard index set instead of a detected one.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        /// axis_cross, hyperbolic_uniform, hyperbolic_decay or l1_decay.
        #[arg(long)]
        set: String,
        /// Index-set bound.
        #[arg(long = "bound")]
        bound: u32,
        /// Decay exponent for the weighted sets (1 or 2).
        #[arg(long)]
        q: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute quantities from a stored approximant without solving PDEs.
    Post {
        #[command(subcommand)]
        what: PostCommand,
    },
    /// Exact-recovery, lattice and periodization checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Recovery trials.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Add a coefficient below the threshold; it must be reported as missed.
        #[arg(long)]
        inject_below_threshold: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum PostCommand {
    /// Expectation per functional.
    Expectation {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sensitivity indices of the classes J_l.
    Gsi {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Values at parameter points, one comma-separated point per line.
    Evaluate {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::warn!("worker pool already initialised: {e}");
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
