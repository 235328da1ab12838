use std::process::ExitCode;

use clap::Parser;
use qmsync::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("qmsync: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
