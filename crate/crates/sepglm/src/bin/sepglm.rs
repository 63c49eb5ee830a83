//! Command-line front end: parses flags, loads the TOML run configuration,
//! and dispatches to the library's command implementations. Exit codes:
//! 0 success, 2 configuration error, 3 data error, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sepglm::config::RunConfig;
use sepglm::mem::CountingAllocator;
use sepglm::runner;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(
    name = "sepglm",
    version,
    about = "Poisson GLMs for binned spike trains under complete separation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, default_value = "sepglm.toml")]
    config: PathBuf,

    /// Override the run seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Bound all parallelism to this many threads (0 = hardware concurrency).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the output directory from the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect perfect predictors, fit every configured strategy, and write
    /// the comparison report.
    Fit,
    /// Detect and classify perfect predictors only.
    Detect,
    /// Draw a synthetic trial set from the [simulate] section.
    Simulate,
    /// Goodness-of-fit diagnostics: deviance ratios, time rescaling, KS.
    Gof,
    /// Trial-resampling bootstrap intervals for one strategy.
    Bootstrap,
    /// Hyperparameter selection by trial-level cross-validation.
    Cv,
}

fn run(cli: &Cli) -> sepglm::Result<runner::RunOutput> {
    let mut cfg = RunConfig::from_path(&cli.config)?;
    cfg.apply_overrides(cli.seed, cli.threads, cli.out.clone());
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| sepglm::Error::Config(format!("threads: {e}")))?;
    }
    match cli.command {
        Command::Fit => runner::cmd_fit(&cfg),
        Command::Detect => runner::cmd_detect(&cfg),
        Command::Simulate => runner::cmd_simulate(&cfg),
        Command::Gof => runner::cmd_gof(&cfg),
        Command::Bootstrap => runner::cmd_bootstrap(&cfg),
        Command::Cv => runner::cmd_cv(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
