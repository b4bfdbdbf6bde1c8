use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qmdp::cli::{run, write_error_report, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out_dir = PathBuf::from(".");
    match run(&cli, &mut out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            write_error_report(&out_dir, &err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
