use std::process::ExitCode;

use chanprobe::cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chanprobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
