//! `clothsep`: command line front end for the layered reconstruction pipeline.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

/// Exit codes.
const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Machine-readable code and exit status of an error.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    use clothsep::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::FileNotFound(_)) => ("FILE_NOT_FOUND", EXIT_VALIDATION),
        Some(E::Io(_)) => ("IO", EXIT_VALIDATION),
        Some(E::Parse { .. }) => ("PARSE", EXIT_VALIDATION),
        Some(E::Validation(_)) => ("VALIDATION", EXIT_VALIDATION),
        Some(E::Bounds(_)) => ("BOUNDS", EXIT_VALIDATION),
        Some(E::Numeric(_)) => ("NUMERIC", EXIT_NUMERIC),
        Some(E::Empty(_)) => ("EMPTY", EXIT_VALIDATION),
        Some(E::Json(_)) => ("JSON", EXIT_VALIDATION),
        Some(E::Image(_)) => ("IMAGE", EXIT_VALIDATION),
        Some(E::Csv(_)) => ("CSV", EXIT_VALIDATION),
        None => ("INTERNAL", EXIT_VALIDATION),
    }
}

fn one_line(err: &anyhow::Error) -> String {
    format!("{err:#}").replace(['\n', '\r'], " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ERROR USAGE: {first}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, status) = classify(&err);
            eprintln!("ERROR {code}: {}", one_line(&err));
            ExitCode::from(status)
        }
    }
}
