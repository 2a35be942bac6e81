//! `wavemaps <command> [--config path] [--flag value ...]`
//!
//! Exit status: 0 on success, 1 when the experiment reports a failure
//! (diagnostics are still written), 2 on a configuration error.

mod commands;
mod config;

use config::Command;
use std::process::ExitCode;

const USAGE: &str = "usage: wavemaps <gen-path|hhl|solve|converge|illposed|norms> [--config path] [--flag value ...]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(first) = args.first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    if first == "--help" || first == "-h" {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = Command::parse(first) else {
        eprintln!("unknown command {first}\n{USAGE}");
        return ExitCode::from(2);
    };
    let cfg = match config::load(&args[1..]).and_then(|c| c.validate(command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(command, &cfg) {
        Ok(w) => {
            for f in &w.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{} failed: {e}", command.name());
            ExitCode::from(1)
        }
    }
}
