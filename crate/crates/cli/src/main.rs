use std::process::ExitCode;

use clap::Parser;
use ordlatent_cli::error::EXIT_NOT_CONVERGED;
use ordlatent_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("ordlatent: the computation did not converge; see the report diagnostics");
            ExitCode::from(EXIT_NOT_CONVERGED as u8)
        }
        Err(e) => {
            eprintln!("ordlatent: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
