use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = capwatch::cli::Cli::parse();
    ExitCode::from(capwatch::cli::execute(cli))
}
