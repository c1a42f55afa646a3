use std::process::ExitCode;

use clap::Parser;
use rem::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).expect("error record serializes"));
            ExitCode::FAILURE
        }
    }
}
