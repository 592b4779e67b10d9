use std::process::ExitCode;

use clap::Parser;

use mfl_lab::cli::{run, Cli};
use mfl_lab::error::EXIT_CONFIG;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            // Usage errors share the config-error code; clap's default of 2
            // would read as an assertion failure.
            return ExitCode::from(if usage { EXIT_CONFIG } else { 0 });
        }
    };
    ExitCode::from(run(&cli))
}
