//! Batch command-line front end: configuration, artifact files and the
//! `cgflow` subcommands.

pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
pub use commands::{Ctx, Report, SampleRecord};
pub use config::{Paths, RunConfig};

/// Environment variable selecting the log level.
pub const LOG_ENV: &str = "CGFLOW_LOG";

#[derive(Debug, Parser)]
#[command(name = "cgflow", version, about = "Compositional flow sampling on a toy synthon-assembly domain")]
pub struct Cli {
    /// Run configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `paths.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for trajectory sampling.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the state-flow training dataset.
    GenData,
    /// Train the state-flow model on the dataset.
    TrainStateflow,
    /// Train the compositional policy against the frozen state flow.
    TrainPolicy,
    /// Sample trajectories.
    Sample {
        #[arg(short = 'n', default_value_t = 20_000)]
        n: usize,
        /// Sample from the uniform policy instead of the checkpoint.
        #[arg(long)]
        uniform: bool,
    },
    /// Enumerate every compositional sequence with exact probabilities.
    Oracle {
        /// Attach uniform-policy probabilities instead of the checkpoint's.
        #[arg(long)]
        uniform: bool,
    },
    /// Compare samples with the oracle table.
    Evaluate {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Check every loss gradient against central differences.
    Gradcheck,
}

impl Cli {
    /// The configuration with command-line overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.paths.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Runs one parsed command and returns its JSON summary.
pub fn execute(cli: &Cli) -> Result<serde_json::Value> {
    let ctx = Ctx::new(cli.run_config()?, cli.threads)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::TrainStateflow => commands::train_stateflow(&ctx),
        Command::TrainPolicy => commands::train_policy(&ctx),
        Command::Sample { n, uniform } => commands::sample(&ctx, *n, *uniform),
        Command::Oracle { uniform } => commands::oracle(&ctx, *uniform),
        Command::Evaluate { samples, table } => commands::evaluate(&ctx, samples.clone(), table.clone()),
        Command::Gradcheck => commands::gradcheck_all(&ctx),
    }
}

/// Machine-readable error record printed on stderr.
pub fn error_record(e: &Error) -> serde_json::Value {
    serde_json::json!({"error": {"kind": e.kind(), "code": e.code(), "message": e.to_string()}})
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Entry point of the `cgflow` binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = Error::Config(e.to_string());
            eprintln!("{}", error_record(&err));
            return err.code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            e.code()
        }
    }
}
