mod args;
mod commands;
mod output;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::CliError;

fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Plan(a) => commands::plan(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Leakage(a) => commands::leakage(a),
        Command::Modes(a) => commands::modes(a),
        Command::Fit(a) => commands::fit(a),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    // Nothing is written until the command has fully succeeded.
    let text = match run(&cli) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ile: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ile: cannot write output: {e}");
            ExitCode::from(2)
        }
    }
}
