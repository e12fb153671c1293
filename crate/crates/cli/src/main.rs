use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pwer_cli::commands::{execute, CliError, Command, Run};
use pwer_cli::config::{Settings, Source};
use pwer_cli::records::Format;

/// Environment variable read for the thread count when `--threads` is absent.
const THREADS_ENV: &str = "PWER_THREADS";

#[derive(Parser)]
#[command(name = "pwer", version, about = "Population-wise error rate designs and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Critical value for observed counts.
    Critical(Flags),
    /// Monte Carlo study of the estimated boundary.
    Simulate(Flags),
    /// Error rates at a given boundary.
    Rates(Flags),
    /// Compare error rates under effects <= 0 with the global null.
    LfcCheck(Flags),
    /// Minimal-prevalence adjustment on trials with unobserved strata.
    EmptyStratumStudy(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    replicates: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-replicate records (simulate, empty-stratum-study).
    #[arg(long, value_name = "PATH")]
    dump: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn run(command: Command, flags: Flags) -> Result<(), CliError> {
    let source = Source::read(&flags.config)?;
    let config = source.parse()?;
    if flags.replicates == Some(0) || (flags.replicates.is_none() && config.replicates == Some(0)) {
        return Err(CliError::Config("replicates must be at least 1".into()));
    }
    let settings = Settings {
        seed: flags.seed.or(config.seed).unwrap_or(1),
        replicates: flags.replicates.or(config.replicates),
        output: flags.out.or_else(|| config.output.clone()),
        dump: flags.dump.or_else(|| config.dump.clone()),
        format: flags.format.or(config.format).unwrap_or_default(),
    };
    let run = Run {
        source: &source,
        config: &config,
        settings: &settings,
    };
    match threads(flags.threads)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| execute(command, &run)),
        None => execute(command, &run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Critical(f) => (Command::Critical, f),
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Rates(f) => (Command::Rates, f),
        Sub::LfcCheck(f) => (Command::LfcCheck, f),
        Sub::EmptyStratumStudy(f) => (Command::EmptyStratumStudy, f),
    };
    match run(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pwer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
