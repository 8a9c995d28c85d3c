//! `airnoma` binary: runs JSON-described experiments and reports their
//! checks on stdout. Exit codes: 0 every check passed, 1 some check failed,
//! 2 the configuration or an artifact write was invalid.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use airnoma_cli::spec::{CliOverrides, Profile};

#[derive(Parser)]
#[command(name = "airnoma", version, about = "Experiment runner for the uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the experiment description.
        config: PathBuf,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seed_list: Option<Vec<u64>>,
        /// Directory the run writes into.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenario and training profile to resolve against.
        #[arg(long, value_enum)]
        profile: Option<Profile>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed_list,
            out,
            profile,
        } => {
            let overrides = CliOverrides {
                seeds: seed_list,
                out_dir: out,
                profile,
            };
            match airnoma_cli::execute_file(&config, &overrides) {
                Ok(outcome) => {
                    for check in &outcome.summary.checks {
                        let verdict = if check.pass { "PASS" } else { "FAIL" };
                        println!("{verdict} {}: {}", check.name, check.detail);
                    }
                    println!("artifacts: {}", outcome.out_dir.display());
                    if outcome.summary.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
