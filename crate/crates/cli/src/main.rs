//! `bcube`: batch front end for the biased-cube verification library.
//!
//! Exit status: 0 when every record passes, 1 on a contract violation or a
//! failed computation, 2 on invalid configuration.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use commands::{Command, Failure};
use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "bcube", version, about = "Verify concentration inequalities on the biased cube")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML file of settings; flags override it.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let settings = match &cli.config {
        Some(path) => match config::load(path) {
            Ok(file) => file.overlaid(&cli.settings),
            Err(e) => {
                eprintln!("bcube: invalid `config`: {e}");
                return ExitCode::from(2);
            }
        },
        None => cli.settings.clone(),
    };
    let report = match commands::run(cli.command, &settings) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bcube {}: {e}", cli.command.name());
            return ExitCode::from(match e {
                Failure::Usage { .. } => 2,
                Failure::Runtime(_) => 1,
            });
        }
    };
    if let Err(e) = output::write(cli.command, &settings, &report) {
        eprintln!("bcube {}: {e}", cli.command.name());
        return ExitCode::from(1);
    }
    let failed: Vec<_> = report.rows.iter().filter(|r| !r.record.pass).collect();
    for row in &failed {
        eprintln!("contract violated: {}", row.record.to_json_line());
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
