use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kmpe_cli::{report, run, run_props, render, CliError, ExperimentConfig};

/// Robust learning experiments with the kernel mean p-power error.
#[derive(Parser)]
#[command(name = "kmpe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override a scalar key, e.g. `--set kmpe.p=3.4` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check the loss properties on random error vectors.
    Props {
        #[arg(long, default_value_t = 1000)]
        vectors: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the CSV schema of a report format version.
    Schema { version: u32 },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let report = match cli.command {
        Command::Run { config, overrides } => run(&ExperimentConfig::load(&config, &overrides)?)?,
        Command::Props { vectors, seed, out } => {
            if vectors == 0 {
                return Err(CliError::Config("--vectors must be at least 1".into()));
            }
            run_props(vectors, seed, &out)?
        }
        Command::Schema { version } => {
            let text = report::schema(version).ok_or_else(|| {
                CliError::Config(format!("unknown schema version {version}; latest is {}", report::SCHEMA_VERSION))
            })?;
            print!("{text}");
            return Ok(());
        }
    };
    print!("{}", render(&report));
    let failed = report.properties.iter().filter(|p| !p.passed()).count();
    if failed > 0 {
        return Err(CliError::PropertiesFailed { failed, total: report.properties.len() });
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kmpe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
