mod args;
mod commands;
mod config;
mod failure;
mod terms;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::failure::Failure;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    let first = e.to_string().lines().next().unwrap_or_default().to_string();
                    let f = Failure::config("usage", first.trim_start_matches("error: "));
                    eprintln!("{f}");
                    ExitCode::from(f.exit_code())
                }
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
