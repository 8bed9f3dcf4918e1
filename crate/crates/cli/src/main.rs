//! `fegap`: prepare, fit, compare, effects, simulate.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 the optimizer did not
//! converge (outputs are still written), 4 I/O failure.

mod args;
mod commands;
mod manifest;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub enum Failure {
    Usage(String),
    NotConverged(String),
    Io(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::NotConverged(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<fegap_core::Error> for Failure {
    fn from(e: fegap_core::Error) -> Self {
        use fegap_core::Error;
        let io = match &e {
            Error::Io(_) => true,
            Error::Csv(c) => c.is_io_error(),
            Error::Json(j) => j.is_io(),
            _ => false,
        };
        if io {
            Failure::Io(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Fit(a) => commands::fit(a),
        Command::Compare(a) => commands::compare(a),
        Command::Effects(a) => commands::effects(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fegap {name}: {f}");
            ExitCode::from(f.code())
        }
    }
}
