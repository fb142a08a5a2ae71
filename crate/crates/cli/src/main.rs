use std::process::ExitCode;

use clap::Parser;
use gptrack_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gptrack: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
