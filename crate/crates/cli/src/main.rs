use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = diffbal_cli::Cli::parse();
    match diffbal_cli::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
