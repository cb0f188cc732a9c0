use std::process::ExitCode;

use clap::Parser;
use pinchwpt::experiment::{self, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match experiment::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
