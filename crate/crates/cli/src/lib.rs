//! Command-line driver: `nodalflow validate | solve | sweep`.
//!
//! Exit codes: 0 success, 1 validation or run failure, 2 usage or parse
//! error, 3 no certified solution.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod output;
pub mod commands;

pub use commands::{solve, sweep, validate, SolveOutcome, SweepOutcome};
pub use output::{config_hash, Manifest, ManifestEntry, SUMMARY_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nodalflow", version, about = "Compute and certify localized sign-changing solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model hypotheses for a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Find and certify sign-changing solutions.
    Solve(SolveArgs),
    /// Solve for a decreasing list of eps values.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `k` from the config.
    #[arg(long)]
    pub k: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub eps: Vec<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn load(path: &Path) -> Result<nodalflow_core::config::RunConfig, i32> {
    nodalflow_core::config::RunConfig::load(path).map_err(|e| {
        eprintln!("error: cannot load {}: {e}", path.display());
        EXIT_USAGE
    })
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let report = validate(&cfg);
            print!("{report}");
            if report.passed() {
                EXIT_OK
            } else {
                for c in report.failures() {
                    eprintln!("violated: {}", c.name);
                }
                EXIT_FAILURE
            }
        }
        Command::Solve(args) => {
            let mut cfg = match load(&args.config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(k) = args.k {
                cfg.k = k;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            match solve(&cfg, &args.out, "solve") {
                Ok(outcome) => {
                    println!("{}", outcome.describe());
                    outcome.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_FAILURE
                }
            }
        }
        Command::Sweep(args) => {
            if args.eps.is_empty() {
                eprintln!("error: --eps needs at least one value");
                return EXIT_USAGE;
            }
            if args.eps.windows(2).any(|w| w[1] >= w[0]) {
                eprintln!("error: --eps values must be strictly decreasing");
                return EXIT_USAGE;
            }
            let mut cfg = match load(&args.config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(k) = args.k {
                cfg.k = k;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            match sweep(&cfg, &args.eps, &args.out) {
                Ok(outcome) => {
                    for (eps, r) in &outcome.runs {
                        match r {
                            Ok(o) => println!("eps {eps}: {}", o.describe()),
                            Err(e) => println!("eps {eps}: failed: {e}"),
                        }
                    }
                    outcome.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_FAILURE
                }
            }
        }
    }
}
