use std::process::ExitCode;

use clap::Parser;

use catmmv_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(out) => {
            for line in &out.messages {
                println!("{line}");
            }
            match out.failure {
                Some(f) => {
                    eprintln!("error: {f}");
                    ExitCode::from(2)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
